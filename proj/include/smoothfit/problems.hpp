#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "smoothfit/errors.hpp"
#include "smoothfit/expression.hpp"
#include "smoothfit/lattice.hpp"

namespace smoothfit::problems {

using lattice::Grid;

enum class ProblemClass { drift_control, optimal_stopping, impulse_control };
enum class BoundaryRule { neumann, far_field };

inline std::string to_string(ProblemClass c) {
    switch (c) {
        case ProblemClass::drift_control: return "drift_control";
        case ProblemClass::optimal_stopping: return "optimal_stopping";
        case ProblemClass::impulse_control: return "impulse_control";
    }
    return "?";
}

inline std::string to_string(BoundaryRule b) { return b == BoundaryRule::neumann ? "neumann" : "far_field"; }

/// Finite sampled control set. Points keep their declared enumeration order,
/// which is the tie-break order of every argmax.
class ControlSet {
public:
    ControlSet() : dim_(0), points_{{}} {}

    ControlSet(std::size_t dim, std::vector<std::vector<double>> points) : dim_(dim), points_(std::move(points)) {
        if (points_.empty()) throw InvalidArgument("control set: empty");
        for (const auto& p : points_) {
            if (p.size() != dim_) throw InvalidArgument("control set: point of wrong dimension");
            for (double v : p)
                if (!std::isfinite(v)) throw InvalidArgument("control set: non-finite control");
        }
    }

    /// Box [lower, upper] sampled with `points` per axis, enumerated row-major.
    static ControlSet box(const std::vector<double>& lower, const std::vector<double>& upper,
                          const std::vector<std::size_t>& points) {
        const std::size_t d = lower.size();
        if (upper.size() != d || points.size() != d || d == 0)
            throw InvalidArgument("control set: box dimension mismatch");
        std::size_t total = 1;
        for (std::size_t i = 0; i < d; ++i) {
            if (points[i] == 0) throw InvalidArgument("control set: zero resolution");
            if (points[i] > 1 && !(lower[i] < upper[i])) throw InvalidArgument("control set: empty box");
            total *= points[i];
        }
        std::vector<std::vector<double>> pts;
        pts.reserve(total);
        std::vector<std::size_t> idx(d, 0);
        for (std::size_t k = 0; k < total; ++k) {
            std::vector<double> p(d);
            for (std::size_t i = 0; i < d; ++i)
                p[i] = points[i] == 1 ? lower[i]
                                      : lower[i] + static_cast<double>(idx[i]) * (upper[i] - lower[i]) /
                                                       static_cast<double>(points[i] - 1);
            pts.push_back(std::move(p));
            for (std::size_t i = d; i-- > 0;) {
                if (++idx[i] < points[i]) break;
                idx[i] = 0;
            }
        }
        return ControlSet(d, std::move(pts));
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<double>& operator[](std::size_t i) const { return points_[i]; }
    const std::vector<std::vector<double>>& points() const noexcept { return points_; }

    /// Index of the control with the smallest Euclidean norm (first on ties).
    std::size_t smallest() const {
        std::size_t best = 0;
        double bn = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) {
            double s = 0.0;
            for (double v : points_[i]) s += v * v;
            if (s < bn) {
                bn = s;
                best = i;
            }
        }
        return best;
    }

private:
    std::size_t dim_;
    std::vector<std::vector<double>> points_;
};

struct Coefficients {
    std::vector<Expression> beta;   ///< n entries
    std::vector<Expression> sigma;  ///< n*m entries, row-major
    Expression g;
    Expression rho;
};

struct ImpulseCosts {
    double c0 = 0.0;
    double c1 = 0.0;
};

/// Separable drift beta(x,a) = beta0(x) + beta1(x,a).
struct DriftSplit {
    std::vector<Expression> beta0;
    std::vector<Expression> beta1;
};

/// Coefficients evaluated at one (x, a).
struct PointCoefficients {
    Vector beta;
    Matrix sigma;
    double g = 0.0;
    double rho = 0.0;
};

struct ProblemSpec {
    std::string name;
    ProblemClass cls = ProblemClass::drift_control;
    std::size_t n = 1;
    std::size_t m = 1;
    Grid grid;
    Coefficients coefficients;
    ControlSet controls;
    std::optional<Expression> obstacle;
    std::optional<ImpulseCosts> impulse_costs;
    std::optional<DriftSplit> drift_split;
    BoundaryRule boundary = BoundaryRule::neumann;
    std::map<std::string, double> constants;
    std::vector<std::string> warnings;
    nlohmann::json source;

    PointCoefficients evaluate(std::span<const double> x, std::span<const double> a) const {
        PointCoefficients c;
        c.beta.resize(static_cast<Eigen::Index>(n));
        c.sigma.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < n; ++i) {
            c.beta[static_cast<Eigen::Index>(i)] = coefficients.beta[i](x, a);
            for (std::size_t j = 0; j < m; ++j)
                c.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = coefficients.sigma[i * m + j](x, a);
        }
        c.g = coefficients.g(x, a);
        c.rho = coefficients.rho(x, a);
        return c;
    }

    PointCoefficients evaluate(const Vector& x, std::size_t control) const {
        return evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), controls[control]);
    }

    Matrix sigma_at(const Vector& x, std::size_t control) const {
        Matrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = coefficients.sigma[i * m + j](xs, controls[control]);
        return s;
    }

    double obstacle_at(const Vector& x) const {
        if (!obstacle) throw InvalidArgument("problem " + name + ": no obstacle");
        return (*obstacle)(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    }
};

/// g + <beta, p> + 1/2 Tr(sigma sigma^T P) - rho r.
inline double operator_value(double g, const Vector& beta, const Matrix& sigma, double rho, double r, const Vector& p,
                             const Matrix& P) {
    const double trace = 0.5 * (sigma.transpose() * P * sigma).trace();
    return g + beta.dot(p) + trace - rho * r;
}

inline void require_symmetric(const Matrix& P) {
    if (P.rows() != P.cols()) throw InvalidArgument("P must be square");
    const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InvalidArgument("P must be symmetric");
}

inline double eval_L(const ProblemSpec& pb, std::size_t control, const Vector& x, double r, const Vector& p,
                     const Matrix& P) {
    if (control >= pb.controls.size()) throw InvalidArgument("eval_L: control index out of range");
    if (static_cast<std::size_t>(x.size()) != pb.n || static_cast<std::size_t>(p.size()) != pb.n ||
        static_cast<std::size_t>(P.rows()) != pb.n)
        throw InvalidArgument("eval_L: dimension mismatch");
    require_symmetric(P);
    const auto c = pb.evaluate(x, control);
    return operator_value(c.g, c.beta, c.sigma, c.rho, r, p, P);
}

struct HamiltonianValue {
    double value;
    std::size_t argmax;
};

/// sup over the sampled control set; first occurrence wins ties.
inline HamiltonianValue eval_H(const ProblemSpec& pb, const Vector& x, double r, const Vector& p, const Matrix& P) {
    if (pb.controls.size() == 0) throw InvalidArgument("eval_H: empty control set");
    HamiltonianValue best{eval_L(pb, 0, x, r, p, P), 0};
    for (std::size_t a = 1; a < pb.controls.size(); ++a) {
        const double v = eval_L(pb, a, x, r, p, P);
        if (v > best.value) best = {v, a};
    }
    return best;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw InvalidArgument(where + ": unknown field '" + it.key() + "'");
    }
}

inline Expression parse_expression(const nlohmann::json& j, VariableLayout layout,
                                   const std::map<std::string, double>& constants, const std::string& where) {
    if (j.is_number()) return Expression::constant(j.get<double>());
    if (!j.is_string()) throw InvalidArgument(where + ": expected an expression string");
    try {
        return Expression::compile(j.get<std::string>(), layout, constants);
    } catch (const Error& e) {
        throw InvalidArgument(where + ": " + e.what());
    }
}

inline std::vector<Expression> parse_vector(const nlohmann::json& j, std::size_t n, VariableLayout layout,
                                            const std::map<std::string, double>& constants, const std::string& where) {
    if (!j.is_array() || j.size() != n)
        throw InvalidArgument(where + ": expected an array of " + std::to_string(n) + " expressions");
    std::vector<Expression> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(parse_expression(j[i], layout, constants, where + "[" + std::to_string(i) + "]"));
    return out;
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InvalidArgument(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(where + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Checks the spec invariants on every grid node (strided when large) and
/// every control. Throws on hard violations, records soft ones in warnings.
inline void validate(ProblemSpec& pb) {
    if (pb.cls == ProblemClass::optimal_stopping && !pb.obstacle)
        throw InvalidArgument("problem " + pb.name + ": optimal_stopping requires an obstacle");
    if (pb.cls == ProblemClass::impulse_control) {
        if (!pb.impulse_costs) throw InvalidArgument("problem " + pb.name + ": impulse_control requires impulse_costs");
        if (!(pb.impulse_costs->c0 > 0.0) || !(pb.impulse_costs->c1 > 0.0))
            throw InvalidArgument("problem " + pb.name + ": impulse costs must be positive");
    }
    if (pb.cls != ProblemClass::drift_control && pb.controls.size() != 1)
        throw InvalidArgument("problem " + pb.name + ": stopping and impulse problems take a singleton control set");

    const std::size_t budget = 200000;
    const std::size_t per_node = pb.controls.size();
    const std::size_t stride = std::max<std::size_t>(1, pb.grid.size() * per_node / budget);
    double rho_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pb.grid.size(); k += stride) {
        const Vector x = pb.grid.node(k);
        const std::span<const double> xs(x.data(), pb.n);
        for (std::size_t a = 0; a < per_node; ++a) {
            PointCoefficients c;
            try {
                c = pb.evaluate(x, a);
                if (pb.obstacle) (*pb.obstacle)(xs);
            } catch (const DomainError& e) {
                throw InvalidArgument("problem " + pb.name + ": coefficient evaluation failed at node " +
                                      std::to_string(k) + ": " + e.what());
            }
            if (c.rho < 0.0) throw InvalidArgument("problem " + pb.name + ": rho < 0 at node " + std::to_string(k));
            rho_min = std::min(rho_min, c.rho);
            if (pb.drift_split) {
                for (std::size_t i = 0; i < pb.n; ++i) {
                    const double b0 = pb.drift_split->beta0[i](xs, pb.controls[a]);
                    const double b1 = pb.drift_split->beta1[i](xs, pb.controls[a]);
                    const double b = c.beta[static_cast<Eigen::Index>(i)];
                    if (std::abs(b0 + b1 - b) > 1e-12 * std::max(1.0, std::abs(b)))
                        throw InvalidArgument("problem " + pb.name + ": drift_split does not sum to beta at node " +
                                              std::to_string(k));
                }
            }
        }
    }
    if (!(rho_min > 0.0)) pb.warnings.push_back("rho vanishes somewhere on the box; discounted problem may be ill-posed");
}

/// Builds a problem from its JSON description. Unknown fields are rejected.
inline ProblemSpec problem_from_json(const nlohmann::json& j) {
    using detail::field;
    const std::string where = "problem";
    detail::reject_unknown(j,
                           {"name", "class", "n", "m", "constants", "box", "coefficients", "control_set", "obstacle",
                            "impulse_costs", "drift_split", "boundary"},
                           where);
    ProblemSpec pb;
    pb.source = j;
    pb.name = j.value("name", std::string("unnamed"));
    const auto cls = field<std::string>(j, "class", where);
    if (cls == "drift_control") pb.cls = ProblemClass::drift_control;
    else if (cls == "optimal_stopping") pb.cls = ProblemClass::optimal_stopping;
    else if (cls == "impulse_control") pb.cls = ProblemClass::impulse_control;
    else throw InvalidArgument(where + ": unknown class '" + cls + "'");

    pb.n = field<std::size_t>(j, "n", where);
    pb.m = field<std::size_t>(j, "m", where);
    if (pb.n == 0 || pb.n > lattice::kMaxDim) throw InvalidArgument(where + ": n must be in 1..4");
    if (pb.m == 0) throw InvalidArgument(where + ": m must be positive");

    if (j.contains("constants")) {
        if (!j["constants"].is_object()) throw InvalidArgument(where + ": constants must be an object");
        for (auto it = j["constants"].begin(); it != j["constants"].end(); ++it) {
            if (!it->is_number()) throw InvalidArgument(where + ": constant '" + it.key() + "' is not a number");
            pb.constants[it.key()] = it->get<double>();
        }
    }

    if (!j.contains("box")) throw InvalidArgument(where + ": missing field 'box'");
    detail::reject_unknown(j["box"], {"lower", "upper", "points"}, "box");
    pb.grid = Grid(field<std::vector<double>>(j["box"], "lower", "box"), field<std::vector<double>>(j["box"], "upper", "box"),
                   field<std::vector<std::size_t>>(j["box"], "points", "box"));
    if (pb.grid.dim() != pb.n) throw InvalidArgument("box: dimension does not match n");

    if (j.contains("control_set")) {
        const auto& cs = j["control_set"];
        detail::reject_unknown(cs, {"points", "lower", "upper", "resolution"}, "control_set");
        if (cs.contains("points") && !cs.contains("lower")) {
            const auto pts = field<std::vector<std::vector<double>>>(cs, "points", "control_set");
            if (pts.empty()) throw InvalidArgument("control_set: empty");
            pb.controls = ControlSet(pts.front().size(), pts);
        } else {
            pb.controls = ControlSet::box(field<std::vector<double>>(cs, "lower", "control_set"),
                                          field<std::vector<double>>(cs, "upper", "control_set"),
                                          field<std::vector<std::size_t>>(cs, "resolution", "control_set"));
        }
    }
    const VariableLayout state_only{pb.n, 0};
    const VariableLayout full{pb.n, pb.controls.dim()};

    if (!j.contains("coefficients")) throw InvalidArgument(where + ": missing field 'coefficients'");
    const auto& co = j["coefficients"];
    detail::reject_unknown(co, {"beta", "sigma", "g", "rho"}, "coefficients");
    for (const char* key : {"beta", "sigma", "g", "rho"})
        if (!co.contains(key)) throw InvalidArgument(std::string("coefficients: missing field '") + key + "'");
    pb.coefficients.beta = detail::parse_vector(co["beta"], pb.n, full, pb.constants, "coefficients.beta");
    const auto& sj = co["sigma"];
    if (!sj.is_array() || sj.size() != pb.n) throw InvalidArgument("coefficients.sigma: expected n rows");
    for (std::size_t i = 0; i < pb.n; ++i) {
        auto row = detail::parse_vector(sj[i], pb.m, full, pb.constants, "coefficients.sigma[" + std::to_string(i) + "]");
        for (auto& e : row) pb.coefficients.sigma.push_back(std::move(e));
    }
    pb.coefficients.g = detail::parse_expression(co["g"], full, pb.constants, "coefficients.g");
    pb.coefficients.rho = detail::parse_expression(co["rho"], full, pb.constants, "coefficients.rho");

    if (j.contains("obstacle")) pb.obstacle = detail::parse_expression(j["obstacle"], state_only, pb.constants, "obstacle");
    if (j.contains("impulse_costs")) {
        detail::reject_unknown(j["impulse_costs"], {"c0", "c1"}, "impulse_costs");
        pb.impulse_costs = ImpulseCosts{field<double>(j["impulse_costs"], "c0", "impulse_costs"),
                                        field<double>(j["impulse_costs"], "c1", "impulse_costs")};
    }
    if (j.contains("drift_split")) {
        const auto& ds = j["drift_split"];
        detail::reject_unknown(ds, {"beta0", "beta1"}, "drift_split");
        if (!ds.contains("beta0") || !ds.contains("beta1")) throw InvalidArgument("drift_split: needs beta0 and beta1");
        pb.drift_split = DriftSplit{detail::parse_vector(ds["beta0"], pb.n, state_only, pb.constants, "drift_split.beta0"),
                                    detail::parse_vector(ds["beta1"], pb.n, full, pb.constants, "drift_split.beta1")};
    }
    if (j.contains("boundary")) {
        const auto b = field<std::string>(j, "boundary", where);
        if (b == "neumann") pb.boundary = BoundaryRule::neumann;
        else if (b == "far_field") pb.boundary = BoundaryRule::far_field;
        else throw InvalidArgument(where + ": unknown boundary rule '" + b + "'");
    }
    validate(pb);
    return pb;
}

inline ProblemSpec problem_from_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(std::string("problem json: ") + e.what());
    }
    return problem_from_json(j);
}

}  // namespace smoothfit::problems
