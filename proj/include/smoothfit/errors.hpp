#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smoothfit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violation: bad shapes, out-of-box queries, invalid parameters.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Expression evaluation left the domain of an elementary function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method ran out of iterations.
class NonConvergence : public Error {
public:
    using Error::Error;
};

/// A discretization would produce negative off-diagonal stencil weights.
class MonotonicityViolation : public Error {
public:
    MonotonicityViolation(const std::string& what, std::size_t node, double magnitude)
        : Error(what), node_(node), magnitude_(magnitude) {}

    std::size_t node() const noexcept { return node_; }
    double magnitude() const noexcept { return magnitude_; }

private:
    std::size_t node_;
    double magnitude_;
};

/// Data contradicting differentiability along range(sigma): a kink was
/// measured in a direction where a semiconvex supersolution must be smooth.
class TheoremViolation : public Error {
public:
    using Error::Error;
};

/// The dimension of a subspace field changes inside a region that was
/// assumed to carry a constant-rank family.
class RankJump : public Error {
public:
    using Error::Error;
};

}  // namespace smoothfit
