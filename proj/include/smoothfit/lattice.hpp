#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "smoothfit/errors.hpp"

namespace smoothfit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace lattice {

inline constexpr std::size_t kMaxDim = 4;

/// Uniform tensor grid on the box [lower, upper]. Node k along axis i sits at
/// lower[i] + k * spacing[i] (bit-exact, the last node may differ from
/// upper[i] by rounding).
class Grid {
public:
    Grid() = default;

    Grid(std::vector<double> lower, std::vector<double> upper, std::vector<std::size_t> points)
        : lower_(std::move(lower)), upper_(std::move(upper)), points_(std::move(points)) {
        const std::size_t n = lower_.size();
        if (n == 0 || upper_.size() != n || points_.size() != n)
            throw InvalidArgument("grid: dimension mismatch between lower, upper and points");
        if (n > kMaxDim) throw InvalidArgument("grid: dimension above 4 is not supported");
        spacing_.resize(n);
        strides_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
                throw InvalidArgument("grid: non-positive extent on axis " + std::to_string(i));
            if (points_[i] < 3)
                throw InvalidArgument("grid: need at least 3 points on axis " + std::to_string(i));
            spacing_[i] = (upper_[i] - lower_[i]) / static_cast<double>(points_[i] - 1);
        }
        std::size_t stride = 1;
        for (std::size_t i = n; i-- > 0;) {
            strides_[i] = stride;
            stride *= points_[i];
        }
        size_ = stride;
    }

    std::size_t dim() const noexcept { return lower_.size(); }
    std::size_t size() const noexcept { return size_; }
    const std::vector<double>& lower() const noexcept { return lower_; }
    const std::vector<double>& upper() const noexcept { return upper_; }
    const std::vector<std::size_t>& points() const noexcept { return points_; }
    const std::vector<double>& spacing() const noexcept { return spacing_; }
    double spacing(std::size_t axis) const { return spacing_[axis]; }
    std::size_t stride(std::size_t axis) const { return strides_[axis]; }

    double max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

    double coordinate(std::size_t axis, std::size_t k) const {
        return lower_[axis] + static_cast<double>(k) * spacing_[axis];
    }

    /// Row-major multi-index (first axis slowest).
    std::vector<std::size_t> multi_index(std::size_t flat) const {
        std::vector<std::size_t> idx(dim());
        for (std::size_t i = 0; i < dim(); ++i) {
            idx[i] = flat / strides_[i];
            flat %= strides_[i];
        }
        return idx;
    }

    std::size_t flat_index(std::span<const std::size_t> idx) const {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < dim(); ++i) flat += idx[i] * strides_[i];
        return flat;
    }

    std::size_t axis_index(std::size_t flat, std::size_t axis) const {
        return (flat / strides_[axis]) % points_[axis];
    }

    Vector node(std::size_t flat) const {
        Vector x(static_cast<Eigen::Index>(dim()));
        for (std::size_t i = 0; i < dim(); ++i) x[static_cast<Eigen::Index>(i)] = coordinate(i, axis_index(flat, i));
        return x;
    }

    bool on_face(std::size_t flat) const {
        for (std::size_t i = 0; i < dim(); ++i) {
            const std::size_t k = axis_index(flat, i);
            if (k == 0 || k + 1 == points_[i]) return true;
        }
        return false;
    }

    bool contains(const Vector& x, double slack = 1e-12) const {
        if (static_cast<std::size_t>(x.size()) != dim()) return false;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double tol = slack * (upper_[i] - lower_[i]);
            const double xi = x[static_cast<Eigen::Index>(i)];
            if (!(xi >= lower_[i] - tol && xi <= upper_[i] + tol)) return false;
        }
        return true;
    }

    /// Distance from x to the box boundary, measured in max-spacing units.
    double boundary_distance_in_spacings(const Vector& x) const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dim(); ++i) {
            const double xi = x[static_cast<Eigen::Index>(i)];
            d = std::min({d, xi - lower_[i], upper_[i] - xi});
        }
        return d / max_spacing();
    }

    /// Probes within two max-spacings of the boundary are excluded from
    /// regularity verdicts.
    bool near_boundary(const Vector& x, double layers = 2.0) const {
        return boundary_distance_in_spacings(x) < layers;
    }

    /// Nearest node (componentwise rounding, clamped into the grid).
    std::size_t nearest_node(const Vector& x) const {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double t = (x[static_cast<Eigen::Index>(i)] - lower_[i]) / spacing_[i];
            const double k = std::clamp(std::round(t), 0.0, static_cast<double>(points_[i] - 1));
            flat += static_cast<std::size_t>(k) * strides_[i];
        }
        return flat;
    }

    double diameter() const {
        double s = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) s += (upper_[i] - lower_[i]) * (upper_[i] - lower_[i]);
        return std::sqrt(s);
    }

    bool operator==(const Grid& o) const {
        return lower_ == o.lower_ && upper_ == o.upper_ && points_ == o.points_;
    }

private:
    std::vector<double> lower_, upper_;
    std::vector<std::size_t> points_;
    std::vector<double> spacing_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

inline Grid build_grid(std::vector<double> lower, std::vector<double> upper, std::vector<std::size_t> points) {
    return Grid(std::move(lower), std::move(upper), std::move(points));
}

/// Axis-aligned sub-box used for sampling regions.
struct Box {
    Vector lower;
    Vector upper;

    static Box of(const Grid& g) {
        return {Eigen::Map<const Vector>(g.lower().data(), static_cast<Eigen::Index>(g.dim())),
                Eigen::Map<const Vector>(g.upper().data(), static_cast<Eigen::Index>(g.dim()))};
    }

    /// The box shrunk by `layers` max-spacings on every side.
    static Box interior(const Grid& g, double layers) {
        Box b = of(g);
        const double m = layers * g.max_spacing();
        b.lower.array() += m;
        b.upper.array() -= m;
        return b;
    }

    bool inside(const Grid& g) const {
        return g.contains(lower) && g.contains(upper) && (lower.array() <= upper.array()).all();
    }
};

/// Scalar field sampled at the nodes of a grid, read through multilinear
/// interpolation. Immutable after construction.
class GridFunction {
public:
    GridFunction() = default;

    GridFunction(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.size())
            throw InvalidArgument("grid function: " + std::to_string(values_.size()) + " values for " +
                                  std::to_string(grid_.size()) + " nodes");
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgument("grid function: non-finite value");
    }

    template <typename Fn>
    static GridFunction sample(const Grid& grid, Fn&& fn) {
        std::vector<double> v(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) v[k] = fn(grid.node(k));
        return GridFunction(grid, std::move(v));
    }

    const Grid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const noexcept { return values_.size(); }

    /// max - min over all nodes.
    double oscillation() const {
        const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
        return *hi - *lo;
    }

private:
    Grid grid_;
    std::vector<double> values_;
};

/// Multilinear interpolation. Exact at nodes and for affine data.
inline double interpolate(const GridFunction& f, const Vector& x) {
    const Grid& g = f.grid();
    const std::size_t n = g.dim();
    if (static_cast<std::size_t>(x.size()) != n) throw InvalidArgument("interpolate: dimension mismatch");
    if (!g.contains(x)) throw InvalidArgument("interpolate: query outside the grid box");

    std::size_t base[kMaxDim];
    double w[kMaxDim];
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (x[static_cast<Eigen::Index>(i)] - g.lower()[i]) / g.spacing(i);
        const double last = static_cast<double>(g.points()[i] - 1);
        const double r = std::round(t);
        double cell, frac;
        if (std::abs(t - r) <= 1e-10 * std::max(1.0, r)) {
            // snap to the node so nodal values come back bit-exact
            const double k = std::clamp(r, 0.0, last);
            cell = std::min(k, last - 1.0);
            frac = k - cell;
        } else {
            cell = std::clamp(std::floor(t), 0.0, last - 1.0);
            frac = std::clamp(t - cell, 0.0, 1.0);
        }
        base[i] = static_cast<std::size_t>(cell);
        w[i] = frac;
    }

    double result = 0.0;
    const std::size_t corners = std::size_t{1} << n;
    for (std::size_t c = 0; c < corners; ++c) {
        double weight = 1.0;
        std::size_t flat = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool up = (c >> i) & 1u;
            const double wi = up ? w[i] : 1.0 - w[i];
            if (wi == 0.0) {
                weight = 0.0;
                break;
            }
            weight *= wi;
            flat += (base[i] + (up ? 1 : 0)) * g.stride(i);
        }
        if (weight != 0.0) result += weight * f[flat];
    }
    return result;
}

enum class Side { plus, minus };

/// Polynomial (Neville) extrapolation of samples (s_k, d_k) to s = 0.
inline double extrapolate_to_zero(std::span<const double> s, std::span<const double> d) {
    std::vector<double> p(d.begin(), d.end());
    const std::size_t m = p.size();
    for (std::size_t level = 1; level < m; ++level)
        for (std::size_t i = 0; i + level < m; ++i)
            p[i] = (s[i + level] * p[i] - s[i] * p[i + 1]) / (s[i + level] - s[i]);
    return p[0];
}

/// Step list {4, 2, 1} x the direction-projected spacing, the distance along
/// h to the next grid line of the axis h moves fastest in.
inline std::vector<double> default_steps(const Grid& g, const Vector& h) {
    double hu = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const double c = std::abs(h[static_cast<Eigen::Index>(i)]);
        if (c > 1e-12) hu = std::min(hu, g.spacing(i) / c);
    }
    return {4.0 * hu, 2.0 * hu, hu};
}

/// One-sided directional derivative of f at x along the unit vector h:
/// plus side is lim (f(x + s h) - f(x)) / s, minus side is
/// lim (f(x) - f(x - s h)) / s, both extrapolated to s -> 0 over `steps`.
inline double one_sided_directional_derivative(const GridFunction& f, const Vector& x, const Vector& h, Side side,
                                               std::span<const double> steps) {
    if (steps.size() < 2) throw InvalidArgument("directional derivative: need at least two steps");
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (!(steps[k] > 0.0)) throw InvalidArgument("directional derivative: steps must be positive");
        if (k > 0 && !(steps[k] < steps[k - 1]))
            throw InvalidArgument("directional derivative: steps must be strictly decreasing");
    }
    if (std::abs(h.norm() - 1.0) > 1e-8) throw InvalidArgument("directional derivative: direction is not a unit vector");

    const double sign = side == Side::plus ? 1.0 : -1.0;
    const double fx = interpolate(f, x);
    std::vector<double> d(steps.size());
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const Vector y = x + sign * steps[k] * h;
        if (!f.grid().contains(y)) throw InvalidArgument("directional derivative: step escapes the grid box");
        d[k] = sign * (interpolate(f, y) - fx) / steps[k];
    }
    return extrapolate_to_zero(steps, d);
}

inline double one_sided_directional_derivative(const GridFunction& f, const Vector& x, const Vector& h, Side side) {
    const auto steps = default_steps(f.grid(), h);
    return one_sided_directional_derivative(f, x, h, side, steps);
}

/// Finite-difference stencils evaluated at nodes.
struct Stencil {
    enum class Order { first_forward, first_backward, first_central, second_central };
    Order order = Order::first_central;
    std::size_t step_multiplier = 1;
};

inline double apply_stencil(const GridFunction& f, std::size_t node, std::size_t axis, Stencil st) {
    if (st.step_multiplier < 1) throw InvalidArgument("stencil: step multiplier must be at least 1");
    const Grid& g = f.grid();
    const std::size_t k = g.axis_index(node, axis);
    const std::size_t m = st.step_multiplier;
    const std::size_t s = g.stride(axis) * m;
    const double h = g.spacing(axis) * static_cast<double>(m);
    const bool has_up = k + m < g.points()[axis];
    const bool has_down = k >= m;
    using O = Stencil::Order;
    switch (st.order) {
        case O::first_forward:
            if (!has_up) break;
            return (f[node + s] - f[node]) / h;
        case O::first_backward:
            if (!has_down) break;
            return (f[node] - f[node - s]) / h;
        case O::first_central:
            if (!has_up || !has_down) break;
            return (f[node + s] - f[node - s]) / (2.0 * h);
        case O::second_central:
            if (!has_up || !has_down) break;
            return (f[node + s] - 2.0 * f[node] + f[node - s]) / (h * h);
    }
    throw InvalidArgument("stencil: leaves the grid at node " + std::to_string(node));
}

// JSON: {dim, lower, upper, points, values}

inline nlohmann::json grid_to_json(const Grid& g) {
    return {{"dim", g.dim()}, {"lower", g.lower()}, {"upper", g.upper()}, {"points", g.points()}};
}

inline Grid grid_from_json(const nlohmann::json& j) {
    try {
        auto g = Grid(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>(),
                      j.at("points").get<std::vector<std::size_t>>());
        if (j.contains("dim") && j.at("dim").get<std::size_t>() != g.dim())
            throw InvalidArgument("grid json: dim does not match lower/upper");
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("grid json: ") + e.what());
    }
}

inline nlohmann::json to_json(const GridFunction& f) {
    auto j = grid_to_json(f.grid());
    j["values"] = std::vector<double>(f.values().begin(), f.values().end());
    return j;
}

inline GridFunction grid_function_from_json(const nlohmann::json& j) {
    try {
        return GridFunction(grid_from_json(j), j.at("values").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("grid function json: ") + e.what());
    }
}

}  // namespace lattice
}  // namespace smoothfit
