#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "smoothfit/problems.hpp"

namespace smoothfit::problems {

/// Perpetual American put under dX = mu X dt + s X dW, discount rho, strike K.
struct PerpetualPut {
    double K = 1.0;
    double mu = 0.0;
    double s = 0.2;
    double rho = 0.05;

    /// Negative root of 1/2 s^2 b (b - 1) + mu b - rho = 0.
    double beta_minus() const {
        const double A = 0.5 * s * s;
        const double B = mu - 0.5 * s * s;
        return (-B - std::sqrt(B * B + 4.0 * A * rho)) / (2.0 * A);
    }
    double boundary() const {
        const double b = beta_minus();
        return K * b / (b - 1.0);
    }
    double value(double x) const {
        const double bs = boundary();
        return x <= bs ? K - x : (K - bs) * std::pow(x / bs, beta_minus());
    }
    double derivative(double x) const {
        const double bs = boundary();
        const double b = beta_minus();
        return x <= bs ? -1.0 : (K - bs) * b * std::pow(x / bs, b) / x;
    }
};

struct BenchmarkOracle {
    std::string name;
    std::function<double(const Vector&)> value;          ///< empty when no closed form
    std::function<double(const Vector&)> free_boundary;  ///< x1-location of the boundary on the slice through x
    std::string boundary_description;
    std::string note;
};

struct CatalogEntry {
    ProblemSpec problem;
    BenchmarkOracle oracle;
};

namespace catalog_text {

inline constexpr const char* B1 = R"json({
  "name": "B1",
  "class": "optimal_stopping",
  "n": 1,
  "m": 1,
  "constants": {"K": 1.0, "mu": 0.0, "s": 0.2, "rho0": 0.05},
  "box": {"lower": [0.01], "upper": [4.0], "points": [4000]},
  "coefficients": {"beta": ["mu*x"], "sigma": [["s*x"]], "g": "0", "rho": "rho0"},
  "obstacle": "pos(K - x)",
  "boundary": "far_field"
})json";

inline constexpr const char* B2 = R"json({
  "name": "B2",
  "class": "optimal_stopping",
  "n": 2,
  "m": 2,
  "constants": {"K": 1.0, "mu1": 0.01, "mu2": 0.02, "a11": 0.3, "a22": 0.2, "rho0": 0.05},
  "box": {"lower": [0.01, 0.01], "upper": [3.0, 3.0], "points": [151, 151]},
  "coefficients": {
    "beta": ["mu1*x1", "mu2*x2"],
    "sigma": [["a11*x1", "0"], ["0", "a22*x2"]],
    "g": "0",
    "rho": "rho0"
  },
  "obstacle": "pos(K - x1 - x2)",
  "boundary": "far_field"
})json";

inline constexpr const char* B3 = R"json({
  "name": "B3",
  "class": "optimal_stopping",
  "n": 2,
  "m": 2,
  "constants": {"s": 0.2, "rho0": 0.05, "x2star": 0.0},
  "box": {"lower": [0.01, -1.0], "upper": [4.0, 1.0], "points": [801, 41]},
  "coefficients": {
    "beta": ["0", "0"],
    "sigma": [["s*x1", "0"], ["0", "0"]],
    "g": "0",
    "rho": "rho0"
  },
  "obstacle": "pos(1 + 0.3*abs(x2 - x2star) - x1)",
  "boundary": "far_field"
})json";

inline constexpr const char* B4 = R"json({
  "name": "B4",
  "class": "drift_control",
  "n": 1,
  "m": 1,
  "constants": {"eps": 0.25, "sig": 0.1, "rho0": 1.0},
  "box": {"lower": [-2.0], "upper": [2.0], "points": [801]},
  "control_set": {"lower": [-1.0], "upper": [1.0], "resolution": [41]},
  "coefficients": {"beta": ["-x + a"], "sigma": [["sig"]], "g": "-x^2 - eps*a^2", "rho": "rho0"},
  "drift_split": {"beta0": ["-x"], "beta1": ["a"]},
  "boundary": "neumann"
})json";

inline constexpr const char* I1 = R"json({
  "name": "I1",
  "class": "impulse_control",
  "n": 1,
  "m": 1,
  "box": {"lower": [-3.0], "upper": [3.0], "points": [301]},
  "coefficients": {"beta": ["-x"], "sigma": [["0.3"]], "g": "-x^2", "rho": "1"},
  "impulse_costs": {"c0": 0.1, "c1": 0.05},
  "boundary": "neumann"
})json";

}  // namespace catalog_text

/// Benchmark problems with their oracles: B1 perpetual put, B2 exchange of
/// baskets, B3 rank-one diffusion with a kinked strike, B4 separable drift
/// control, I1 mean-reverting impulse control.
inline std::vector<CatalogEntry> catalog() {
    std::vector<CatalogEntry> out;

    {
        const PerpetualPut put{1.0, 0.0, 0.2, 0.05};
        BenchmarkOracle o;
        o.name = "B1";
        o.value = [put](const Vector& x) { return put.value(x[0]); };
        o.free_boundary = [put](const Vector&) { return put.boundary(); };
        o.boundary_description = "stop on (0, b*], continue on (b*, inf), b* = K b-/(b- - 1)";
        o.note = "closed-form perpetual put; b- is the negative root of 1/2 s^2 b(b-1) + mu b - rho = 0";
        out.push_back({problem_from_text(catalog_text::B1), std::move(o)});
    }
    {
        BenchmarkOracle o;
        o.name = "B2";
        o.boundary_description = "no closed form";
        o.note = "oracle is structural: convex payoff, 0 <= V <= K, V >= payoff";
        out.push_back({problem_from_text(catalog_text::B2), std::move(o)});
    }
    {
        auto strike = [](double x2) { return 1.0 + 0.3 * std::abs(x2); };
        BenchmarkOracle o;
        o.name = "B3";
        o.value = [strike](const Vector& x) { return PerpetualPut{strike(x[1]), 0.0, 0.2, 0.05}.value(x[0]); };
        o.free_boundary = [strike](const Vector& x) { return PerpetualPut{strike(x[1]), 0.0, 0.2, 0.05}.boundary(); };
        o.boundary_description = "per slice x2: perpetual-put boundary with strike K(x2) = 1 + 0.3|x2|";
        o.note = "x2 is frozen (zero drift and diffusion rows), so each slice is a 1-D put";
        out.push_back({problem_from_text(catalog_text::B3), std::move(o)});
    }
    {
        BenchmarkOracle o;
        o.name = "B4";
        o.boundary_description = "no stopping region";
        o.note = "no closed form; checked by self-convergence and Monte Carlo verification";
        out.push_back({problem_from_text(catalog_text::B4), std::move(o)});
    }
    {
        BenchmarkOracle o;
        o.name = "I1";
        o.boundary_description = "action region found numerically";
        o.note = "checked by QVI complementarity and monotone outer iterates";
        out.push_back({problem_from_text(catalog_text::I1), std::move(o)});
    }
    return out;
}

inline CatalogEntry catalog_entry(const std::string& name) {
    for (auto& e : catalog())
        if (e.problem.name == name) return e;
    throw InvalidArgument("catalog: no benchmark named '" + name + "'");
}

}  // namespace smoothfit::problems
