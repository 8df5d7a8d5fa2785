#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothfit/errors.hpp"
#include "smoothfit/lattice.hpp"
#include "smoothfit/problems.hpp"

namespace smoothfit::regularity {

using lattice::Box;
using lattice::Grid;
using lattice::GridFunction;
using lattice::Side;
using problems::ProblemSpec;

namespace detail {

inline Vector uniform_in(const Box& b, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(b.lower.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = b.lower[i] + u(rng) * (b.upper[i] - b.lower[i]);
    return x;
}

inline void require_inside(const Grid& g, const Box& b, const char* who) {
    if (static_cast<std::size_t>(b.lower.size()) != g.dim() || static_cast<std::size_t>(b.upper.size()) != g.dim())
        throw InvalidArgument(std::string(who) + ": region dimension mismatch");
    if (!b.inside(g)) throw InvalidArgument(std::string(who) + ": region escapes the grid box");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Semiconvexity

struct SemiconvexityCertificate {
    Box region;
    double c_R = 0.0;
    std::size_t samples = 0;
    Vector worst_x, worst_y;
    double worst_lambda = 0.0;
};

namespace detail {

/// Node index range [first, last] of the grid inside `region` along each axis.
inline std::vector<std::pair<std::size_t, std::size_t>> node_range(const Grid& g, const Box& region) {
    std::vector<std::pair<std::size_t, std::size_t>> r(g.dim());
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double h = g.spacing(i);
        const double lo = std::ceil((region.lower[ii] - g.lower()[i]) / h - 1e-9);
        const double hi = std::floor((region.upper[ii] - g.lower()[i]) / h + 1e-9);
        r[i] = {static_cast<std::size_t>(std::max(lo, 0.0)),
                static_cast<std::size_t>(std::min(hi, static_cast<double>(g.points()[i] - 1)))};
    }
    return r;
}

}  // namespace detail

/// Estimates c_R = max [v(l x + (1-l) y) - l v(x) - (1-l) v(y)] / [l (1-l) |x-y|^2],
/// floored at 0, over seeded lattice-aligned triples in `region`: x and y are
/// nodes and l x + (1 - l) y is a node on the segment between them, so only
/// nodal values enter. Excesses within rounding of the field's magnitude count as 0.
inline SemiconvexityCertificate semiconvexity_constant(const GridFunction& v, const Box& region,
                                                       std::size_t n_samples = 1000, std::uint64_t seed = 1) {
    detail::require_inside(v.grid(), region, "semiconvexity_constant");
    if (n_samples == 0) throw InvalidArgument("semiconvexity_constant: need at least one sample");
    const Grid& g = v.grid();
    const std::size_t n = g.dim();
    const auto range = detail::node_range(g, region);
    bool room = false;
    for (const auto& [a, b] : range) room = room || b >= a + 2;
    if (!room) throw InvalidArgument("semiconvexity_constant: region holds fewer than 3 nodes along every axis");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> uq(2, 16);
    SemiconvexityCertificate cert;
    cert.region = region;
    double best = 0.0;
    double vmax = 0.0;
    for (double x : v.values()) vmax = std::max(vmax, std::abs(x));
    std::vector<std::size_t> I(n), J(n), Z(n);
    std::vector<long long> D(n);
    while (cert.samples < n_samples) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> ui(range[i].first, range[i].second);
            I[i] = ui(rng);
            J[i] = ui(rng);
        }
        // pull y toward x until the difference is a multiple of q
        const int q = uq(rng);
        bool zero = true;
        for (std::size_t i = 0; i < n; ++i) {
            D[i] = (static_cast<long long>(J[i]) - static_cast<long long>(I[i])) / q;
            zero = zero && D[i] == 0;
        }
        if (zero) continue;
        const int t = std::uniform_int_distribution<int>(1, q - 1)(rng);
        for (std::size_t i = 0; i < n; ++i) {
            J[i] = static_cast<std::size_t>(static_cast<long long>(I[i]) + q * D[i]);
            Z[i] = static_cast<std::size_t>(static_cast<long long>(I[i]) + t * D[i]);
        }
        ++cert.samples;
        const double l = 1.0 - static_cast<double>(t) / q;
        const std::size_t kx = g.flat_index(I), ky = g.flat_index(J), kz = g.flat_index(Z);
        const Vector x = g.node(kx), y = g.node(ky);
        const double a = v[kz], b = l * v[kx], c = (1.0 - l) * v[ky];
        const double excess = a - b - c;
        if (excess <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a) + std::abs(b) + std::abs(c), vmax))
            continue;
        const double ratio = excess / (l * (1.0 - l) * (x - y).squaredNorm());
        if (ratio > best) {
            best = ratio;
            cert.worst_x = x;
            cert.worst_y = y;
            cert.worst_lambda = l;
        }
    }
    cert.c_R = best;
    return cert;
}

// ---------------------------------------------------------------------------
// range(sigma)

struct RangeBasis {
    Vector x;
    Matrix basis;         ///< n x r, orthonormal
    Matrix projector;     ///< basis basis^T
    Matrix kernel_basis;  ///< n x (n - r)
    Vector singular_values;
    std::size_t rank = 0;
    /// sv[r-1] / sv[r] (infinity when r == n, 0 when r == 0).
    double gap = 0.0;
    double threshold = 0.0;
    /// Rank with every other control dropped, for a refinement check.
    std::size_t rank_subsampled = 0;
    /// R(x) = {0}: the theorem does not apply at x.
    bool degenerate = false;
};

namespace detail {

inline void canonical_signs(Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        Eigen::Index arg = 0;
        m.col(c).cwiseAbs().maxCoeff(&arg);
        if (m(arg, c) < 0.0) m.col(c) *= -1.0;
    }
}

inline RangeBasis basis_of_columns(const Matrix& cols, const Vector& x, double tau_rank, std::size_t rank_sub) {
    const auto n = cols.rows();
    RangeBasis rb;
    rb.x = x;
    rb.rank_subsampled = rank_sub;
    Eigen::JacobiSVD<Matrix> svd(cols, Eigen::ComputeFullU);
    rb.singular_values = svd.singularValues();
    const double smax = rb.singular_values.size() ? rb.singular_values[0] : 0.0;
    rb.threshold = tau_rank * smax;
    std::size_t r = 0;
    if (smax > 0.0)
        for (Eigen::Index i = 0; i < rb.singular_values.size(); ++i)
            if (rb.singular_values[i] > rb.threshold) ++r;
    rb.rank = r;
    rb.degenerate = r == 0;
    const auto rr = static_cast<Eigen::Index>(r);
    rb.basis = svd.matrixU().leftCols(rr);
    rb.kernel_basis = svd.matrixU().rightCols(n - rr);
    canonical_signs(rb.basis);
    canonical_signs(rb.kernel_basis);
    rb.projector = rb.basis * rb.basis.transpose();
    if (r == 0) rb.gap = 0.0;
    else if (rr >= rb.singular_values.size() || rb.singular_values[rr] == 0.0)
        rb.gap = std::numeric_limits<double>::infinity();
    else rb.gap = rb.singular_values[rr - 1] / rb.singular_values[rr];
    return rb;
}

inline std::size_t rank_of(const Matrix& cols, double tau_rank) {
    if (cols.cols() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(cols);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    std::size_t r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) r += s[i] > tau_rank * s[0];
    return r;
}

}  // namespace detail

/// Orthonormal basis of R(x) = span of range(sigma(x,a)) over the sampled
/// controls, from the SVD of the stacked sigma columns. Directions with
/// singular value above tau_rank * (largest) are retained.
inline RangeBasis range_basis(const ProblemSpec& pb, const Vector& x, double tau_rank = 1e-8) {
    const auto n = static_cast<Eigen::Index>(pb.n);
    const auto m = static_cast<Eigen::Index>(pb.m);
    const auto A = static_cast<Eigen::Index>(pb.controls.size());
    Matrix cols(n, m * A);
    for (Eigen::Index a = 0; a < A; ++a) cols.middleCols(a * m, m) = pb.sigma_at(x, static_cast<std::size_t>(a));
    Matrix sub(n, m * ((A + 1) / 2));
    for (Eigen::Index a = 0; a < A; a += 2) sub.middleCols((a / 2) * m, m) = cols.middleCols(a * m, m);
    return detail::basis_of_columns(cols, x, tau_rank, detail::rank_of(sub, tau_rank));
}

/// Basis of the span of arbitrary column vectors (used for S(x)).
inline RangeBasis span_basis(const Matrix& cols, const Vector& x, double tau_rank = 1e-8) {
    return detail::basis_of_columns(cols, x, tau_rank, detail::rank_of(cols, tau_rank));
}

// ---------------------------------------------------------------------------
// Directional smoothness

enum class Classification { smooth, kink, near_boundary_excluded };
enum class DirectionRole { range, kernel, combination };

inline std::string to_string(Classification c) {
    switch (c) {
        case Classification::smooth: return "smooth";
        case Classification::kink: return "kink";
        case Classification::near_boundary_excluded: return "near_boundary_excluded";
    }
    return "?";
}

inline std::string to_string(DirectionRole r) {
    switch (r) {
        case DirectionRole::range: return "range";
        case DirectionRole::kernel: return "kernel";
        case DirectionRole::combination: return "combination";
    }
    return "?";
}

struct DirectionalReport {
    Vector x;
    Vector h;
    DirectionRole role = DirectionRole::range;
    double slope_plus = 0.0;
    double slope_minus = 0.0;
    double jump = 0.0;
    double tol_jump = 0.0;
    /// max(|slope_plus|, |slope_minus|), the local derivative scale.
    double scale = 0.0;
    Classification classification = Classification::smooth;
};

struct SmoothnessOptions {
    /// Fixed tolerance; 0 selects 5 * max spacing * local scale.
    double tol_jump = 0.0;
    std::size_t n_random = 3;
    std::uint64_t seed = 7;
};

/// Value-scale floor osc(V) / diam(box) used in the default tolerance.
inline double value_scale_floor(const GridFunction& v) { return v.oscillation() / v.grid().diameter(); }

inline double default_tol_jump(const GridFunction& v, double slope_plus, double slope_minus) {
    const double scale = std::max({std::abs(slope_plus), std::abs(slope_minus), value_scale_floor(v)});
    return 5.0 * v.grid().max_spacing() * scale;
}

inline DirectionalReport probe_direction(const GridFunction& v, const Vector& x, const Vector& h, DirectionRole role,
                                         double tol_jump = 0.0) {
    DirectionalReport r;
    r.x = x;
    r.h = h;
    r.role = role;
    if (v.grid().near_boundary(x)) {
        r.classification = Classification::near_boundary_excluded;
        return r;
    }
    r.slope_plus = lattice::one_sided_directional_derivative(v, x, h, Side::plus);
    r.slope_minus = lattice::one_sided_directional_derivative(v, x, h, Side::minus);
    r.jump = r.slope_plus - r.slope_minus;
    r.scale = std::max(std::abs(r.slope_plus), std::abs(r.slope_minus));
    r.tol_jump = tol_jump > 0.0 ? tol_jump : default_tol_jump(v, r.slope_plus, r.slope_minus);
    r.classification = std::abs(r.jump) <= r.tol_jump ? Classification::smooth : Classification::kink;
    return r;
}

/// One report per R(x) basis direction, per kernel direction, and per random
/// unit combination inside R(x).
inline std::vector<DirectionalReport> directional_smoothness(const GridFunction& v, const Vector& x,
                                                             const RangeBasis& basis,
                                                             const SmoothnessOptions& opts = {}) {
    std::vector<DirectionalReport> out;
    for (Eigen::Index c = 0; c < basis.basis.cols(); ++c)
        out.push_back(probe_direction(v, x, basis.basis.col(c), DirectionRole::range, opts.tol_jump));
    for (Eigen::Index c = 0; c < basis.kernel_basis.cols(); ++c)
        out.push_back(probe_direction(v, x, basis.kernel_basis.col(c), DirectionRole::kernel, opts.tol_jump));
    if (basis.rank > 0) {
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> nd;
        for (std::size_t i = 0; i < opts.n_random; ++i) {
            Vector coef(static_cast<Eigen::Index>(basis.rank));
            for (Eigen::Index j = 0; j < coef.size(); ++j) coef[j] = nd(rng);
            if (coef.norm() == 0.0) coef[0] = 1.0;
            const Vector h = basis.basis * (coef / coef.norm());
            out.push_back(probe_direction(v, x, h / h.norm(), DirectionRole::combination, opts.tol_jump));
        }
    }
    return out;
}

/// D_R v(x) = sum_k slope(h_k) h_k over the orthonormal R(x) basis, with the
/// slope taken as the mean of the one-sided limits.
inline Vector projected_gradient(const GridFunction& v, const Vector& x, const RangeBasis& basis, double tol_jump = 0.0) {
    if (v.grid().near_boundary(x)) throw InvalidArgument("projected_gradient: probe lies in the near-boundary zone");
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index c = 0; c < basis.basis.cols(); ++c) {
        const auto r = probe_direction(v, x, basis.basis.col(c), DirectionRole::range, tol_jump);
        if (r.classification == Classification::kink)
        {
            std::string at;
            for (Eigen::Index i = 0; i < x.size(); ++i) at += (i ? ", " : "") + std::to_string(x[i]);
            throw TheoremViolation("projected_gradient: kink of size " + std::to_string(r.jump) +
                                   " along a range(sigma) direction at (" + at + "), tolerance " +
                                   std::to_string(r.tol_jump));
        }
        g += 0.5 * (r.slope_plus + r.slope_minus) * basis.basis.col(c);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Continuity of the projected gradient

struct ModulusReport {
    std::vector<double> deltas;
    std::vector<double> modulus;            ///< max |D_S v(x) - D_S v(y)| over pairs with |x-y| <= delta
    std::vector<double> projector_modulus;  ///< same for the projector field
    std::vector<std::size_t> pair_counts;
    double noise_floor = 0.0;  ///< largest one-sided jump seen, the estimator noise
    std::size_t points = 0;
    std::size_t rank = 0;
    bool monotone = true;
    bool reaches_floor = false;
};

using BasisField = std::function<RangeBasis(const Vector&)>;

/// Empirical modulus of continuity of x -> D_S v(x) on seeded samples from
/// `region`, for each delta of the ladder (largest first).
inline ModulusReport gradient_continuity(const GridFunction& v, const Box& region, const BasisField& basis_field,
                                         std::vector<double> deltas, std::size_t n_points = 200,
                                         std::uint64_t seed = 11) {
    detail::require_inside(v.grid(), region, "gradient_continuity");
    std::sort(deltas.begin(), deltas.end(), std::greater<>());
    std::mt19937_64 rng(seed);
    std::vector<Vector> pts, grads;
    std::vector<Matrix> projs;
    ModulusReport rep;
    rep.deltas = deltas;
    std::optional<std::size_t> rank;
    std::size_t attempts = 0;
    while (pts.size() < n_points && attempts < 50 * n_points) {
        ++attempts;
        const Vector x = detail::uniform_in(region, rng);
        if (v.grid().near_boundary(x)) continue;
        const RangeBasis b = basis_field(x);
        if (!rank) rank = b.rank;
        if (b.rank != *rank)
            throw RankJump("gradient_continuity: rank of R(x) changes from " + std::to_string(*rank) + " to " +
                           std::to_string(b.rank) + " inside the region");
        for (Eigen::Index c = 0; c < b.basis.cols(); ++c) {
            const auto r = probe_direction(v, x, b.basis.col(c), DirectionRole::range);
            rep.noise_floor = std::max(rep.noise_floor, std::abs(r.jump));
        }
        grads.push_back(projected_gradient(v, x, b));
        projs.push_back(b.projector);
        pts.push_back(x);
    }
    rep.points = pts.size();
    rep.rank = rank.value_or(0);
    for (double d : deltas) {
        double m = 0.0, pm = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j)
                if ((pts[i] - pts[j]).norm() <= d) {
                    ++count;
                    m = std::max(m, (grads[i] - grads[j]).norm());
                    pm = std::max(pm, (projs[i] - projs[j]).norm());
                }
        rep.modulus.push_back(m);
        rep.projector_modulus.push_back(pm);
        rep.pair_counts.push_back(count);
    }
    for (std::size_t k = 1; k < rep.modulus.size(); ++k)
        if (!(rep.modulus[k] <= rep.modulus[k - 1] || rep.modulus[k] <= rep.noise_floor)) rep.monotone = false;
    rep.reaches_floor = !rep.modulus.empty() &&
                        (rep.modulus.back() < rep.modulus.front() || rep.modulus.front() <= rep.noise_floor);
    return rep;
}

// ---------------------------------------------------------------------------
// Kink witness

/// Second-order hyper-dual number: value, two first-order parts, mixed part.
struct HyperDual {
    double v = 0.0, a = 0.0, b = 0.0, ab = 0.0;

    friend HyperDual operator+(HyperDual x, HyperDual y) { return {x.v + y.v, x.a + y.a, x.b + y.b, x.ab + y.ab}; }
    friend HyperDual operator-(HyperDual x, HyperDual y) { return {x.v - y.v, x.a - y.a, x.b - y.b, x.ab - y.ab}; }
    friend HyperDual operator*(HyperDual x, HyperDual y) {
        return {x.v * y.v, x.a * y.v + x.v * y.a, x.b * y.v + x.v * y.b, x.ab * y.v + x.a * y.b + x.b * y.a + x.v * y.ab};
    }
    friend HyperDual operator*(double s, HyperDual x) { return {s * x.v, s * x.a, s * x.b, s * x.ab}; }
};

struct KinkWitness {
    Vector p1, p2;
    double kappa = 0.0;
    Matrix sigma0;
    std::vector<long long> j_list;
    std::vector<double> lambda;
    std::vector<double> residual;
    std::vector<double> trace_error;     ///< |Tr(sigma0^T D^2 phi_j(0) sigma0) - j|
    std::vector<double> gradient_error;  ///< |D phi_j(0) - (p1 + p2)/2|
    std::vector<double> max_ratio;       ///< max rho_j(t)/|t| on the sampled t grid
    std::vector<double> sampled_radius;  ///< t grid covers [-radius, radius]
    std::vector<double> validity_radius; ///< largest r with rho_j(t) <= |t| for all sampled |t| <= r
    double slope_consistency = 0.0;      ///< relative spread of consecutive residual slopes
    bool increasing = true;
    bool identities_hold = true;
};

struct WitnessBase {
    double g0 = 0.0;
    Vector beta0;
    double rho0 = 0.0;
    double v0 = 0.0;
};

/// rho_j(t) = -lambda^3 t^4 + (lambda/2) t^2.
template <typename T>
T witness_rho(double lambda, T t) {
    const T t2 = t * t;
    return (-lambda * lambda * lambda) * (t2 * t2) + (0.5 * lambda) * t2;
}

/// phi_j(y) = rho_j(<p1 - p2, y>/2) + <p1 + p2, y>/2 - (kappa/2)|y|^2.
template <typename T>
T witness_phi(double lambda, const Vector& p1, const Vector& p2, double kappa, const std::vector<T>& y) {
    T t{}, lin{}, sq{};
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        t = t + (0.5 * (p1[ii] - p2[ii])) * y[i];
        lin = lin + (0.5 * (p1[ii] + p2[ii])) * y[i];
        sq = sq + y[i] * y[i];
    }
    return witness_rho(lambda, t) + lin - (0.5 * kappa) * sq;
}

/// Builds the test functions phi_j of the contradiction argument and checks
/// their gradient, the trace identity and the growth of the operator value.
inline KinkWitness kink_witness(const Vector& p1, const Vector& p2, double kappa, const Matrix& sigma0,
                                const std::vector<long long>& j_list, WitnessBase base = {}) {
    const auto n = p1.size();
    if (p2.size() != n || sigma0.rows() != n) throw InvalidArgument("kink_witness: dimension mismatch");
    if (!(kappa >= 0.0)) throw InvalidArgument("kink_witness: kappa must be >= 0");
    if (j_list.empty()) throw InvalidArgument("kink_witness: empty j list");
    for (std::size_t i = 0; i < j_list.size(); ++i)
        if (j_list[i] <= 0 || (i > 0 && j_list[i] <= j_list[i - 1]))
            throw InvalidArgument("kink_witness: j list must be increasing positive integers");
    const Vector sd = sigma0.transpose() * (p1 - p2);
    if (!(sd.norm() > 1e-12 * std::max(1.0, sigma0.norm() * (p1 - p2).norm())))
        throw InvalidArgument("kink_witness: requires sigma*(0,a)(p1 - p2) != 0");
    if (base.beta0.size() == 0) base.beta0 = Vector::Zero(n);

    KinkWitness w;
    w.p1 = p1;
    w.p2 = p2;
    w.kappa = kappa;
    w.sigma0 = sigma0;
    w.j_list = j_list;
    const double sig2 = sigma0.squaredNorm();
    const double den = sd.squaredNorm();

    for (long long j : j_list) {
        const double lambda = 4.0 * (static_cast<double>(j) + kappa * sig2) / den;
        Vector grad(n);
        Matrix hess(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a; b < n; ++b) {
                std::vector<HyperDual> y(static_cast<std::size_t>(n));
                y[static_cast<std::size_t>(a)].a = 1.0;
                y[static_cast<std::size_t>(b)].b = 1.0;
                const HyperDual f = witness_phi(lambda, p1, p2, kappa, y);
                hess(a, b) = hess(b, a) = f.ab;
                if (a == b) grad[a] = f.a;
            }
        }
        const double trace = (sigma0.transpose() * hess * sigma0).trace();
        w.lambda.push_back(lambda);
        w.trace_error.push_back(std::abs(trace - static_cast<double>(j)));
        w.gradient_error.push_back((grad - 0.5 * (p1 + p2)).norm());
        w.residual.push_back(problems::operator_value(base.g0, base.beta0, sigma0, base.rho0, base.v0, grad, hess));

        // rho_j(t) <= |t| on a t grid reaching well past the quartic's turning point
        const double radius = 10.0 / lambda;
        constexpr int T = 4001;
        double worst = -std::numeric_limits<double>::infinity();
        double valid = radius;
        for (int i = 0; i < T; ++i) {
            const double t = -radius + 2.0 * radius * i / (T - 1);
            if (t == 0.0) continue;
            const double r = witness_rho(lambda, t);
            worst = std::max(worst, r / std::abs(t));
            if (r > std::abs(t)) valid = std::min(valid, std::abs(t));
        }
        w.max_ratio.push_back(worst);
        w.sampled_radius.push_back(radius);
        w.validity_radius.push_back(valid);
    }

    for (std::size_t i = 0; i < w.trace_error.size(); ++i)
        if (w.trace_error[i] > 1e-10 || w.gradient_error[i] > 1e-10) w.identities_hold = false;
    for (std::size_t i = 1; i < w.residual.size(); ++i)
        if (!(w.residual[i] > w.residual[i - 1])) w.increasing = false;
    if (w.residual.size() >= 3) {
        std::vector<double> slopes;
        for (std::size_t i = 1; i < w.residual.size(); ++i)
            slopes.push_back((w.residual[i] - w.residual[i - 1]) /
                             static_cast<double>(w.j_list[i] - w.j_list[i - 1]));
        const auto [lo, hi] = std::minmax_element(slopes.begin(), slopes.end());
        w.slope_consistency = (*hi - *lo) / std::max(std::abs(*hi), 1e-300);
    }
    return w;
}

struct WitnessInstance {
    Vector p1, p2;
    double kappa = 0.0;
    Matrix sigma0;
};

/// Seeded draw: standard normal p1, p2 and sigma0 (n x m), kappa uniform on [0, 2).
inline WitnessInstance random_witness_instance(std::uint64_t seed, std::size_t n, std::size_t m) {
    if (n == 0 || m == 0) throw InvalidArgument("random_witness_instance: dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 2.0);
    WitnessInstance w;
    const auto N = static_cast<Eigen::Index>(n), M = static_cast<Eigen::Index>(m);
    w.p1.resize(N);
    w.p2.resize(N);
    w.sigma0.resize(N, M);
    for (Eigen::Index i = 0; i < N; ++i) w.p1[i] = nd(rng);
    for (Eigen::Index i = 0; i < N; ++i) w.p2[i] = nd(rng);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < M; ++j) w.sigma0(i, j) = nd(rng);
    w.kappa = ud(rng);
    return w;
}

// ---------------------------------------------------------------------------
// Smooth fit

struct DirectionFit {
    Vector h;
    DirectionRole role = DirectionRole::range;
    double dV_plus = 0.0, dV_minus = 0.0;
    double dg_plus = 0.0, dg_minus = 0.0;
    double gap = 0.0;
    bool judged = true;
    bool obstacle_differentiable = true;
    bool pass = true;
};

struct SmoothFitReport {
    std::size_t node = 0;
    Vector x;
    double value_gap = 0.0;
    std::vector<DirectionFit> directions;
    bool skipped = false;
    std::string note;
    bool pass = true;
};

/// Free-boundary nodes: inside `region` with a neighbour outside it.
inline std::vector<std::size_t> region_edge(const Grid& g, const std::vector<std::uint8_t>& region) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!region[k]) continue;
        bool edge = false;
        for (std::size_t i = 0; i < g.dim() && !edge; ++i) {
            const std::size_t ki = g.axis_index(k, i);
            if (ki > 0 && !region[k - g.stride(i)]) edge = true;
            if (ki + 1 < g.points()[i] && !region[k + g.stride(i)]) edge = true;
        }
        if (edge) out.push_back(k);
    }
    return out;
}

/// Smooth-fit verdicts at free-boundary nodes: |V - g| <= tol_value and,
/// along every R(x) direction, matching one-sided slopes of V and of the
/// obstacle within tol_deriv. Kernel directions are reported, not judged.
inline std::vector<SmoothFitReport> smooth_fit_check(const GridFunction& V, const problems::Expression& obstacle,
                                                     const std::vector<std::uint8_t>& region,
                                                     const BasisField& basis_field, double tol_value,
                                                     double tol_deriv) {
    const Grid& g = V.grid();
    if (region.size() != g.size()) throw InvalidArgument("smooth_fit_check: region mask size mismatch");
    std::vector<SmoothFitReport> out;
    const std::vector<double> none;
    for (std::size_t k : region_edge(g, region)) {
        SmoothFitReport rep;
        rep.node = k;
        rep.x = g.node(k);
        const std::span<const double> xs(rep.x.data(), g.dim());
        rep.value_gap = std::abs(V[k] - obstacle(xs));
        if (g.near_boundary(rep.x, 4.0)) {
            rep.skipped = true;
            rep.note = "edge node within the near-boundary zone";
            out.push_back(std::move(rep));
            continue;
        }
        const RangeBasis b = basis_field(rep.x);
        auto judge = [&](const Vector& h, DirectionRole role) {
            DirectionFit f;
            f.h = h;
            f.role = role;
            f.judged = role == DirectionRole::range;
            bool kp = false, km = false;
            const Vector mh = -h;
            f.dg_plus = obstacle.directional(xs, none, std::span<const double>(h.data(), g.dim()), kp).d;
            f.dg_minus = -obstacle.directional(xs, none, std::span<const double>(mh.data(), g.dim()), km).d;
            if (kp || km) {
                f.obstacle_differentiable = false;
                f.judged = false;
            }
            f.dV_plus = lattice::one_sided_directional_derivative(V, rep.x, h, Side::plus);
            f.dV_minus = lattice::one_sided_directional_derivative(V, rep.x, h, Side::minus);
            f.gap = std::max(std::abs(f.dV_plus - f.dg_plus), std::abs(f.dV_minus - f.dg_minus));
            f.pass = !f.judged || f.gap <= tol_deriv;
            return f;
        };
        for (Eigen::Index c = 0; c < b.basis.cols(); ++c) rep.directions.push_back(judge(b.basis.col(c), DirectionRole::range));
        for (Eigen::Index c = 0; c < b.kernel_basis.cols(); ++c)
            rep.directions.push_back(judge(b.kernel_basis.col(c), DirectionRole::kernel));
        bool judged_any = false;
        rep.pass = rep.value_gap <= tol_value;
        for (const auto& f : rep.directions) {
            judged_any = judged_any || f.judged;
            rep.pass = rep.pass && f.pass;
        }
        if (!judged_any) {
            rep.skipped = true;
            rep.note = "obstacle not differentiable along any range direction";
        }
        out.push_back(std::move(rep));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Growth, Lipschitz and semiconvexity bounds

struct BoundCheck {
    bool pass = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    Vector worst_x;
    Vector worst_y;
};

struct ValueBounds {
    BoundCheck growth, lipschitz, semiconvexity;
    double M = 0.0;
    double p = 2.0;
    std::size_t samples = 0;
    bool pass() const { return growth.pass && lipschitz.pass && semiconvexity.pass; }
};

namespace detail {

inline double powabs(const Vector& x, double e) { return e == 0.0 ? 1.0 : std::pow(x.norm(), e); }

inline void record(BoundCheck& c, double margin, double scale, const Vector& x, const Vector& y) {
    if (margin < c.worst_margin) {
        c.worst_margin = margin;
        c.worst_x = x;
        c.worst_y = y;
    }
    if (margin < -1e-12 * std::max(1.0, scale)) c.pass = false;
}

}  // namespace detail

/// Samples |V(x)| <= M(1+|x|^p), the weighted Lipschitz bound and the
/// weighted semiconvexity bound; returns the worst margin of each.
inline ValueBounds check_value_bounds(const GridFunction& V, double M, double p, std::size_t n_samples = 10000,
                                      std::uint64_t seed = 5) {
    if (!(M > 0.0)) throw InvalidArgument("check_value_bounds: M must be positive");
    if (!(p >= 2.0)) throw InvalidArgument("check_value_bounds: p must be >= 2");
    const Grid& g = V.grid();
    const Box box = Box::of(g);
    ValueBounds out;
    out.M = M;
    out.p = p;
    out.samples = n_samples;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Vector x = g.node(k);
        const double bound = M * (1.0 + detail::powabs(x, p));
        detail::record(out.growth, bound - std::abs(V[k]), bound, x, x);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ul(0.0, 1.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Vector xb = detail::uniform_in(box, rng);
        const Vector x = detail::uniform_in(box, rng);
        double l = ul(rng);
        if (l <= 0.0) l = 0.5;
        const double vxb = lattice::interpolate(V, xb), vx = lattice::interpolate(V, x);
        const double bound = M * (1.0 + detail::powabs(xb, p));
        detail::record(out.growth, bound - std::abs(vxb), bound, xb, xb);
        const double d = (xb - x).norm();
        const double lip = M * (1.0 + detail::powabs(xb, p - 1.0) + detail::powabs(x, p - 1.0)) * d;
        detail::record(out.lipschitz, lip - std::abs(vxb - vx), lip, xb, x);
        const double excess = lattice::interpolate(V, l * xb + (1.0 - l) * x) - l * vxb - (1.0 - l) * vx;
        const double sc =
            M * l * (1.0 - l) * (1.0 + detail::powabs(xb, p - 2.0) + detail::powabs(x, p - 2.0)) * d * d;
        detail::record(out.semiconvexity, sc - excess, sc, xb, x);
    }
    return out;
}

/// Smallest M for which a reference field (typically the payoff) satisfies
/// the three sampled bounds; used to fix M before checking V.
inline double fit_bound_constant(const GridFunction& ref, double p, std::size_t n_samples = 10000,
                                 std::uint64_t seed = 13) {
    const Grid& g = ref.grid();
    const Box box = Box::of(g);
    double M = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Vector x = g.node(k);
        M = std::max(M, std::abs(ref[k]) / (1.0 + detail::powabs(x, p)));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ul(0.0, 1.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Vector xb = detail::uniform_in(box, rng);
        const Vector x = detail::uniform_in(box, rng);
        double l = ul(rng);
        if (l <= 0.0) l = 0.5;
        const double d = (xb - x).norm();
        if (d == 0.0) continue;
        const double vxb = lattice::interpolate(ref, xb), vx = lattice::interpolate(ref, x);
        M = std::max(M, std::abs(vxb - vx) / ((1.0 + detail::powabs(xb, p - 1.0) + detail::powabs(x, p - 1.0)) * d));
        const double excess = lattice::interpolate(ref, l * xb + (1.0 - l) * x) - l * vxb - (1.0 - l) * vx;
        M = std::max(M, excess / (l * (1.0 - l) * (1.0 + detail::powabs(xb, p - 2.0) + detail::powabs(x, p - 2.0)) * d * d));
    }
    return M;
}

// ---------------------------------------------------------------------------
// Theorem suite over a probe set

struct ProbeReport {
    Vector x;
    RangeBasis basis;
    std::vector<DirectionalReport> directions;
};

struct RegularityReport {
    std::vector<ProbeReport> probes;
    std::size_t range_probes = 0;
    std::size_t range_violations = 0;
    std::size_t kernel_kinks = 0;
    std::size_t excluded = 0;
    std::size_t degenerate_points = 0;
    bool pass() const { return range_violations == 0; }
};

/// Seeded probe points, uniform in the box shrunk by `margin` max-spacings.
inline std::vector<Vector> random_probes(const Grid& g, std::size_t count, std::uint64_t seed, double margin = 5.0) {
    const Box inner = Box::interior(g, margin);
    std::mt19937_64 rng(seed);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(detail::uniform_in(inner, rng));
    return out;
}

/// Runs directional_smoothness at each probe. A kink along a range or
/// combination direction counts as a violation; kernel kinks are tallied only.
inline RegularityReport verify_directional_regularity(const GridFunction& V, const ProblemSpec& pb,
                                                      const std::vector<Vector>& probes,
                                                      const SmoothnessOptions& opts = {}, double tau_rank = 1e-8) {
    RegularityReport rep;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        ProbeReport pr;
        pr.x = probes[i];
        pr.basis = range_basis(pb, pr.x, tau_rank);
        if (pr.basis.degenerate) ++rep.degenerate_points;
        SmoothnessOptions o = opts;
        o.seed = opts.seed + i;
        pr.directions = directional_smoothness(V, pr.x, pr.basis, o);
        for (const auto& d : pr.directions) {
            if (d.classification == Classification::near_boundary_excluded) {
                ++rep.excluded;
                continue;
            }
            if (d.role == DirectionRole::kernel) {
                rep.kernel_kinks += d.classification == Classification::kink;
            } else {
                ++rep.range_probes;
                rep.range_violations += d.classification == Classification::kink;
            }
        }
        rep.probes.push_back(std::move(pr));
    }
    return rep;
}

}  // namespace smoothfit::regularity
