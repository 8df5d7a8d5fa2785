#pragma once

#include <initializer_list>
#include <random>
#include <string>

#include "smoothfit/smoothfit.hpp"

namespace sft {

using smoothfit::Matrix;
using smoothfit::Vector;

inline Vector vec(std::initializer_list<double> v) {
    Vector x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

/// Problem from JSON with a drift-control class and a small 1-D box filled in when absent.
inline smoothfit::problems::ProblemSpec problem(nlohmann::json j) {
    if (!j.contains("class")) j["class"] = "drift_control";
    if (!j.contains("box")) j["box"] = {{"lower", {-1.0}}, {"upper", {1.0}}, {"points", {5}}};
    return smoothfit::problems::problem_from_json(j);
}

/// Catalog entry with fields of its JSON text overridden.
inline smoothfit::problems::ProblemSpec patched(const char* text, const nlohmann::json& patch) {
    auto j = nlohmann::json::parse(text);
    j.merge_patch(patch);
    return smoothfit::problems::problem_from_json(j);
}

inline std::string source_path(const std::string& rel) { return std::string(SMOOTHFIT_SOURCE_DIR) + "/" + rel; }

/// Bisection on a bracketing interval.
template <typename F>
double bisect(F&& f, double lo, double hi, int iters = 200) {
    double flo = f(lo);
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace sft
