#pragma once

#include "smoothfit/errors.hpp"
#include "smoothfit/parallel.hpp"
#include "smoothfit/lattice.hpp"
#include "smoothfit/expression.hpp"
#include "smoothfit/problems.hpp"
#include "smoothfit/catalog.hpp"
#include "smoothfit/policy.hpp"
#include "smoothfit/solver.hpp"
#include "smoothfit/regularity.hpp"
#include "smoothfit/synthesis.hpp"
#include "smoothfit/io.hpp"
