#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "smoothfit/errors.hpp"
#include "smoothfit/lattice.hpp"
#include "smoothfit/parallel.hpp"
#include "smoothfit/policy.hpp"
#include "smoothfit/problems.hpp"

namespace smoothfit::solver {

using lattice::Grid;
using lattice::GridFunction;
using problems::ProblemSpec;

struct DiscretizeOptions {
    /// Keep only the control-free part: beta0 drift, diffusion and discount,
    /// no running reward. Requires a drift split.
    bool base_only = false;
    std::size_t threads = 1;
};

/// Row form of the discrete operator for one control:
///   (L v)_k = diag_k v_k + sum_e weight_{k,e} v_{col_{k,e}},  residual = L v + source.
/// Boundary rows hold the boundary rule instead of the PDE.
class DiscreteGenerator {
public:
    Grid grid;
    std::size_t control = 0;
    std::size_t width = 0;
    std::vector<std::size_t> cols;
    std::vector<double> weights;
    std::vector<std::uint8_t> counts;
    std::vector<double> diag;
    std::vector<double> source;
    std::vector<double> rho;
    std::vector<std::uint8_t> boundary;

    std::size_t size() const noexcept { return diag.size(); }

    double apply_row(std::size_t k, std::span<const double> v) const {
        double s = diag[k] * v[k];
        const std::size_t base = k * width;
        for (std::size_t e = 0; e < counts[k]; ++e) s += weights[base + e] * v[cols[base + e]];
        return s;
    }

    double row_value(std::size_t k, std::span<const double> v) const { return apply_row(k, v) + source[k]; }

    /// Magnitude of the terms summed in a row, the scale of its rounding error.
    double row_scale(std::size_t k, std::span<const double> v) const {
        double s = std::abs(diag[k] * v[k]) + std::abs(source[k]);
        const std::size_t base = k * width;
        for (std::size_t e = 0; e < counts[k]; ++e) s += std::abs(weights[base + e] * v[cols[base + e]]);
        return s;
    }

    std::vector<double> apply(std::span<const double> v) const {
        std::vector<double> out(size());
        for (std::size_t k = 0; k < size(); ++k) out[k] = apply_row(k, v);
        return out;
    }

    double min_offdiagonal() const {
        double w = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < size(); ++k)
            for (std::size_t e = 0; e < counts[k]; ++e) w = std::min(w, weights[k * width + e]);
        return w;
    }
};

namespace detail {

inline std::vector<double> drift_parts(const ProblemSpec& pb, std::span<const double> x, std::span<const double> a,
                                       std::size_t axis, double beta_full, bool base_only) {
    if (!pb.drift_split) return {beta_full};
    const double b0 = pb.drift_split->beta0[axis](x, a);
    if (base_only) return {b0};
    return {b0, pb.drift_split->beta1[axis](x, a)};
}

}  // namespace detail

/// Outward log-derivative lambda = V'/V at a face for the decaying far-field
/// mode. Solves the Riccati equation of 1/2 A V'' + B V' - R V = 0 along an
/// outward ray, started at the frozen-coefficient root at the far end. Falls
/// back to 0 (Neumann) where the ray degenerates.
inline double far_field_slope(const ProblemSpec& pb, const Vector& x, std::size_t control, std::size_t axis,
                              double outward) {
    const Grid& g = pb.grid;
    const double D = 4.0 * (g.upper()[axis] - g.lower()[axis]);
    constexpr int N = 400;
    const double ds = D / N;
    const auto ax = static_cast<Eigen::Index>(axis);

    struct ABR {
        double A, B, R;
    };
    auto coeff = [&](double s) -> std::optional<ABR> {
        Vector y = x;
        y[ax] += outward * s;
        try {
            const auto c = pb.evaluate(y, control);
            const ABR r{c.sigma.row(ax).squaredNorm(), outward * c.beta[ax], c.rho};
            if (!std::isfinite(r.A) || !std::isfinite(r.B) || !std::isfinite(r.R)) return std::nullopt;
            return r;
        } catch (const DomainError&) {
            return std::nullopt;
        }
    };
    const auto here = coeff(0.0);
    if (!here || !(here->A > 1e-14)) return 0.0;
    const double floor_A = 1e-3 * here->A;

    bool ok = true;
    auto f = [&](double s, double l) {
        const auto c = coeff(s);
        if (!c || !(c->A > floor_A)) {
            ok = false;
            return 0.0;
        }
        return 2.0 * (c->R - c->B * l) / c->A - l * l;
    };
    const auto far = coeff(D);
    if (!far || !(far->A > floor_A)) return 0.0;
    double lam = (-far->B - std::sqrt(far->B * far->B + 2.0 * far->A * far->R)) / far->A;
    for (int i = N; i > 0 && ok; --i) {
        const double s = i * ds;
        const double k1 = f(s, lam);
        const double k2 = f(s - 0.5 * ds, lam - 0.5 * ds * k1);
        const double k3 = f(s - 0.5 * ds, lam - 0.5 * ds * k2);
        const double k4 = f(s - ds, lam - ds * k3);
        lam -= ds * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        if (!std::isfinite(lam)) ok = false;
    }
    if (!ok) return 0.0;
    return std::min(lam, 0.0);
}

/// Monotone upwind discretization of the operator for control `control`.
/// Cross terms use the wide-stencil split by the sign of C_ij; a negative
/// axis weight raises MonotonicityViolation.
inline DiscreteGenerator discretize(const ProblemSpec& pb, const Grid& grid, std::size_t control,
                                    const DiscretizeOptions& opts = {}) {
    if (control >= pb.controls.size()) throw InvalidArgument("discretize: control index out of range");
    if (grid.dim() != pb.n) throw InvalidArgument("discretize: grid dimension does not match the problem");
    if (opts.base_only && !pb.drift_split) throw InvalidArgument("discretize: base_only needs a drift split");
    const std::size_t n = pb.n;
    const std::size_t N = grid.size();

    DiscreteGenerator G;
    G.grid = grid;
    G.control = control;
    G.width = 2 * n + n * (n - 1);
    G.cols.assign(N * G.width, 0);
    G.weights.assign(N * G.width, 0.0);
    G.counts.assign(N, 0);
    G.diag.assign(N, 0.0);
    G.source.assign(N, 0.0);
    G.rho.assign(N, 0.0);
    G.boundary.assign(N, 0);

    // per-node write slots keep the result independent of the thread count
    std::vector<std::optional<MonotonicityViolation>> violations(N);
    const auto& a = pb.controls[control];

    parallel_for(N, opts.threads, [&](std::size_t k) {
        const Vector x = grid.node(k);
        const std::span<const double> xs(x.data(), n);
        const auto c = pb.evaluate(xs, a);
        const Matrix C = c.sigma * c.sigma.transpose();
        G.rho[k] = c.rho;

        std::vector<std::vector<double>> drifts(n);
        std::vector<bool> active(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            drifts[i] = detail::drift_parts(pb, xs, a, i, c.beta[ii], opts.base_only);
            bool on = C(ii, ii) != 0.0;
            for (double b : drifts[i]) on = on || b != 0.0;
            for (std::size_t j = 0; j < n; ++j) on = on || (j != i && C(ii, static_cast<Eigen::Index>(j)) != 0.0);
            active[i] = on;
        }

        const std::size_t base = k * G.width;
        std::size_t face_axis = n;
        double outward = 0.0;
        for (std::size_t i = 0; i < n && face_axis == n; ++i) {
            if (!active[i]) continue;
            const std::size_t ki = grid.axis_index(k, i);
            if (ki == 0) {
                face_axis = i;
                outward = -1.0;
            } else if (ki + 1 == grid.points()[i]) {
                face_axis = i;
                outward = 1.0;
            }
        }

        if (face_axis < n) {
            const double h = grid.spacing(face_axis);
            const double lambda =
                pb.boundary == problems::BoundaryRule::far_field ? far_field_slope(pb, x, control, face_axis, outward) : 0.0;
            const std::size_t inward = outward < 0 ? k + grid.stride(face_axis) : k - grid.stride(face_axis);
            G.boundary[k] = 1;
            G.cols[base] = inward;
            G.weights[base] = 1.0 / h;
            G.counts[k] = 1;
            G.diag[k] = -1.0 / h + lambda;
            G.source[k] = 0.0;
            return;
        }

        // slots: 2i (up), 2i+1 (down), then two per cross pair
        double* w = &G.weights[base];
        std::size_t* col = &G.cols[base];
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t s = grid.stride(i);
            col[2 * i] = k + s;
            col[2 * i + 1] = k - s;
            if (!active[i]) continue;
            const double h = grid.spacing(i);
            for (double b : drifts[i]) {
                if (b > 0.0) {
                    w[2 * i] += b / h;
                    d -= b / h;
                } else if (b < 0.0) {
                    w[2 * i + 1] -= b / h;
                    d += b / h;
                }
            }
            const double cii = C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
            w[2 * i] += 0.5 * cii / (h * h);
            w[2 * i + 1] += 0.5 * cii / (h * h);
            d -= cii / (h * h);
        }
        std::size_t slot = 2 * n;
        double worst_cross = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double cij = C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                const std::size_t si = grid.stride(i), sj = grid.stride(j);
                if (cij > 0.0) {
                    col[slot] = k + si + sj;
                    col[slot + 1] = k - si - sj;
                } else {
                    col[slot] = k + si - sj;
                    col[slot + 1] = k - si + sj;
                }
                if (cij != 0.0) {
                    const double cw = std::abs(cij) / (2.0 * grid.spacing(i) * grid.spacing(j));
                    w[slot] += cw;
                    w[slot + 1] += cw;
                    w[2 * i] -= cw;
                    w[2 * i + 1] -= cw;
                    w[2 * j] -= cw;
                    w[2 * j + 1] -= cw;
                    d += 2.0 * cw;
                    worst_cross = std::max(worst_cross, std::abs(cij));
                }
                slot += 2;
            }
        }
        d -= c.rho;
        double scale = std::abs(d);
        for (std::size_t e = 0; e < slot; ++e) scale = std::max(scale, std::abs(w[e]));
        for (std::size_t e = 0; e < slot; ++e) {
            if (w[e] < -1e-12 * scale) {
                violations[k].emplace("discretize: negative stencil weight at node " + std::to_string(k) +
                                          " (cross-diffusion " + std::to_string(worst_cross) +
                                          " exceeds the diagonal bound)",
                                      k, worst_cross);
                return;
            }
            w[e] = std::max(w[e], 0.0);
            // unused slots may point past a face of an inactive axis
            if (w[e] == 0.0) col[e] = k;
        }
        G.counts[k] = static_cast<std::uint8_t>(slot);
        G.diag[k] = d;
        G.source[k] = opts.base_only ? 0.0 : c.g;
    });

    for (auto& v : violations)
        if (v) throw *v;
    return G;
}

inline std::vector<DiscreteGenerator> discretize_all(const ProblemSpec& pb, const Grid& grid, std::size_t threads) {
    std::vector<DiscreteGenerator> out;
    out.reserve(pb.controls.size());
    for (std::size_t a = 0; a < pb.controls.size(); ++a) out.push_back(discretize(pb, grid, a, {false, threads}));
    return out;
}

enum class LinearSolver { direct, gauss_seidel };

inline std::string to_string(LinearSolver s) { return s == LinearSolver::direct ? "direct" : "gauss_seidel"; }

struct SolveOptions {
    double tol = 1e-8;
    std::size_t max_iter = 5000;
    /// Declared lower bound for the discount rate on the grid.
    double rho_min = 1e-12;
    LinearSolver linear_solver = LinearSolver::direct;
    /// Residual target of each inner linear solve; 0 means tol / 10.
    double inner_tol = 0.0;
    std::size_t max_sweeps = 2000000;
    std::size_t threads = 1;
    /// Seed the policy from a solve on a 4x coarser grid.
    bool cascade = true;
    std::size_t cascade_min_points = 21;
};

struct SolveReport {
    std::size_t iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    std::vector<double> residual_history;
    std::vector<std::size_t> policy_changes;
    std::size_t linear_iterations = 0;
    std::string ordering = "natural";
    std::string linear_solver = "direct";
    bool converged = false;
    bool residual_monotone = true;
    /// QVI outer loop: sup-norm change per outer step and monotonicity flag.
    std::vector<double> outer_changes;
    bool outer_monotone = true;
    double outer_worst_increase = 0.0;
    std::vector<std::string> warnings;
    /// Not part of deterministic artifacts.
    double wall_time_s = 0.0;
};

/// Linear system A v = -b assembled from a per-node choice of rows.
struct RowChoice {
    const DiscreteGenerator* gen = nullptr;  ///< nullptr: identity row v_k = psi_k
    double psi = 0.0;
};

namespace detail {

inline double system_residual(const std::vector<RowChoice>& rows, std::span<const double> v) {
    double r = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const double e = rows[k].gen ? rows[k].gen->row_value(k, v) : rows[k].psi - v[k];
        r = std::max(r, std::abs(e));
    }
    return r;
}

inline void solve_direct(const std::vector<RowChoice>& rows, std::vector<double>& v) {
    const std::size_t N = rows.size();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(N * 5);
    Vector rhs(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < N; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        if (!rows[k].gen) {
            trips.emplace_back(kk, kk, 1.0);
            rhs[kk] = rows[k].psi;
            continue;
        }
        const auto& G = *rows[k].gen;
        trips.emplace_back(kk, kk, G.diag[k]);
        for (std::size_t e = 0; e < G.counts[k]; ++e)
            trips.emplace_back(kk, static_cast<Eigen::Index>(G.cols[k * G.width + e]), G.weights[k * G.width + e]);
        rhs[kk] = -G.source[k];
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NonConvergence("linear solve: sparse LU factorization failed");
    const Vector sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite()) throw NonConvergence("linear solve: sparse LU solve failed");
    v.assign(sol.data(), sol.data() + sol.size());
}

/// Sequential Gauss-Seidel in natural node order, warm-started from v.
inline std::size_t solve_gauss_seidel(const std::vector<RowChoice>& rows, std::vector<double>& v, double tol,
                                      std::size_t max_sweeps) {
    const std::size_t N = rows.size();
    for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
        for (std::size_t k = 0; k < N; ++k) {
            if (!rows[k].gen) {
                v[k] = rows[k].psi;
                continue;
            }
            const auto& G = *rows[k].gen;
            double s = G.source[k];
            for (std::size_t e = 0; e < G.counts[k]; ++e) s += G.weights[k * G.width + e] * v[G.cols[k * G.width + e]];
            v[k] = -s / G.diag[k];
        }
        if (system_residual(rows, v) <= tol) return sweep;
    }
    throw NonConvergence("linear solve: Gauss-Seidel did not reach the residual target within " +
                         std::to_string(max_sweeps) + " sweeps");
}

}  // namespace detail

inline std::size_t solve_linear(const std::vector<RowChoice>& rows, std::vector<double>& v, const SolveOptions& opts) {
    if (opts.linear_solver == LinearSolver::direct) {
        detail::solve_direct(rows, v);
        return 1;
    }
    const double tol = opts.inner_tol > 0.0 ? opts.inner_tol : 0.1 * opts.tol;
    return detail::solve_gauss_seidel(rows, v, tol, opts.max_sweeps);
}

/// Result of Howard iteration. Option index per node: a control index, or
/// controls.size() for the obstacle branch.
struct HowardResult {
    std::vector<double> values;
    std::vector<std::size_t> option;
    SolveReport report;
};

/// Policy iteration for max_o { row_o(v) } = 0 over the generator rows and,
/// when `obstacle` is given, the extra branch psi - v.
inline HowardResult howard(const std::vector<DiscreteGenerator>& gens, const std::vector<double>* obstacle,
                           std::vector<std::size_t> option, std::vector<double> v, const SolveOptions& opts) {
    const std::size_t N = gens.front().size();
    const std::size_t nA = gens.size();
    const std::size_t stop = nA;
    if (option.size() != N) option.assign(N, 0);
    if (v.size() != N) v.assign(N, 0.0);

    HowardResult out;
    SolveReport& rep = out.report;
    rep.linear_solver = to_string(opts.linear_solver);
    std::vector<RowChoice> rows(N);
    std::vector<std::size_t> next(N);
    std::vector<double> best_val(N);

    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        for (std::size_t k = 0; k < N; ++k)
            rows[k] = option[k] == stop ? RowChoice{nullptr, (*obstacle)[k]} : RowChoice{&gens[option[k]], 0.0};
        rep.linear_iterations += solve_linear(rows, v, opts);

        parallel_for(N, opts.threads, [&](std::size_t k) {
            std::size_t arg = 0;
            double best = gens[0].row_value(k, v);
            double scale = gens[0].row_scale(k, v);
            for (std::size_t a = 1; a < nA; ++a) {
                const double r = gens[a].row_value(k, v);
                scale = std::max(scale, gens[a].row_scale(k, v));
                if (r > best) {
                    best = r;
                    arg = a;
                }
            }
            if (obstacle) {
                const double r = (*obstacle)[k] - v[k];
                if (r > best) {
                    best = r;
                    arg = stop;
                }
            }
            const double cur = option[k] == stop ? (*obstacle)[k] - v[k] : gens[option[k]].row_value(k, v);
            // keep the current branch unless the improvement exceeds rounding
            const double tie = 1e-12 * std::max(1.0, scale);
            next[k] = best - cur > tie ? arg : option[k];
            best_val[k] = best;
        });

        double res = 0.0;
        for (double b : best_val) res = std::max(res, std::abs(b));
        std::size_t changes = 0;
        for (std::size_t k = 0; k < N; ++k) changes += next[k] != option[k];
        if (!rep.residual_history.empty() && res > rep.residual_history.back() * (1.0 + 1e-9) + 1e-14)
            rep.residual_monotone = it <= 2 ? rep.residual_monotone : false;
        rep.residual_history.push_back(res);
        rep.policy_changes.push_back(changes);
        rep.iterations = it;
        rep.residual = res;
        option.swap(next);
        if (changes == 0 && res <= opts.tol) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.residual_monotone) rep.warnings.push_back("residual sequence increased after the first sweeps");

    // report the first-occurrence maximizing control off the obstacle branch
    for (std::size_t k = 0; k < N; ++k) {
        if (option[k] == stop) continue;
        std::size_t arg = 0;
        double best = gens[0].row_value(k, v);
        for (std::size_t a = 1; a < nA; ++a) {
            const double r = gens[a].row_value(k, v);
            if (r > best) {
                best = r;
                arg = a;
            }
        }
        option[k] = arg;
    }
    out.values = std::move(v);
    out.option = std::move(option);
    return out;
}

struct Solution {
    GridFunction V;
    FeedbackPolicy policy;
    /// Stop region (stopping) or action region (impulse); empty for drift control.
    std::vector<std::uint8_t> region;
    SolveReport report;
    /// Obstacle values used by the final solve (payoff, or M V for impulse).
    std::vector<double> obstacle;
};

namespace detail {

inline double min_rho(const std::vector<DiscreteGenerator>& gens) {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& G : gens)
        for (std::size_t k = 0; k < G.size(); ++k) r = std::min(r, G.rho[k]);
    return r;
}

inline std::optional<Grid> coarser(const Grid& g, std::size_t min_points) {
    std::vector<std::size_t> pts = g.points();
    bool changed = false;
    for (auto& p : pts) {
        const std::size_t q = (p - 1) / 4 + 1;
        if (q >= min_points) {
            p = q;
            changed = true;
        }
    }
    if (!changed) return std::nullopt;
    return Grid(g.lower(), g.upper(), pts);
}

inline std::vector<double> sample_obstacle(const ProblemSpec& pb, const Grid& grid) {
    std::vector<double> psi(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) psi[k] = pb.obstacle_at(grid.node(k));
    return psi;
}

/// Initial branch choice from values interpolated off a coarse solution.
inline std::vector<std::size_t> policy_from_values(const std::vector<DiscreteGenerator>& gens,
                                                   const std::vector<double>* obstacle, std::span<const double> v) {
    const std::size_t N = gens.front().size();
    std::vector<std::size_t> opt(N, 0);
    for (std::size_t k = 0; k < N; ++k) {
        double best = gens[0].row_value(k, v);
        for (std::size_t a = 1; a < gens.size(); ++a) {
            const double r = gens[a].row_value(k, v);
            if (r > best) {
                best = r;
                opt[k] = a;
            }
        }
        if (obstacle && (*obstacle)[k] - v[k] > best) opt[k] = gens.size();
    }
    return opt;
}

inline std::vector<double> resample(const GridFunction& coarse, const Grid& fine) {
    std::vector<double> v(fine.size());
    for (std::size_t k = 0; k < fine.size(); ++k) v[k] = lattice::interpolate(coarse, fine.node(k));
    return v;
}

}  // namespace detail

inline Solution solve(const ProblemSpec& pb, const SolveOptions& opts);

namespace detail {

inline void check_options(const SolveOptions& opts) {
    if (!(opts.tol > 0.0)) throw InvalidArgument("solve: tolerances must be > 0");
    if (opts.inner_tol < 0.0) throw InvalidArgument("solve: tolerances must be > 0");
    if (opts.max_iter == 0) throw InvalidArgument("solve: max_iter must be positive");
}

inline Solution finish(const ProblemSpec& pb, HowardResult&& hr, std::vector<double> psi) {
    Solution s;
    s.V = GridFunction(pb.grid, std::move(hr.values));
    s.policy.grid = pb.grid;
    s.policy.actions.resize(pb.grid.size());
    const std::size_t stop = pb.controls.size();
    for (std::size_t k = 0; k < pb.grid.size(); ++k) {
        if (hr.option[k] == stop) s.policy.actions[k] = Action{ActionKind::stop, 0, 0};
        else s.policy.actions[k] = Action{ActionKind::control, hr.option[k], 0};
    }
    s.report = std::move(hr.report);
    s.obstacle = std::move(psi);
    return s;
}

inline Solution howard_solve(const ProblemSpec& pb, const SolveOptions& opts, bool with_obstacle) {
    check_options(opts);
    const auto t0 = std::chrono::steady_clock::now();
    const auto gens = discretize_all(pb, pb.grid, opts.threads);
    if (detail::min_rho(gens) < opts.rho_min)
        throw InvalidArgument("solve: rho falls below the declared rho_min " + std::to_string(opts.rho_min));
    std::vector<double> psi;
    if (with_obstacle) psi = sample_obstacle(pb, pb.grid);

    std::vector<std::size_t> option;
    std::vector<double> v;
    if (opts.cascade) {
        if (auto cg = coarser(pb.grid, opts.cascade_min_points)) {
            ProblemSpec coarse = pb;
            coarse.grid = *cg;
            const Solution cs = solve(coarse, opts);
            v = resample(cs.V, pb.grid);
            option = policy_from_values(gens, with_obstacle ? &psi : nullptr, v);
        }
    }
    if (option.empty()) option.assign(pb.grid.size(), 0);

    auto hr = howard(gens, with_obstacle ? &psi : nullptr, std::move(option), std::move(v), opts);
    hr.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Solution s = finish(pb, std::move(hr), std::move(psi));
    if (with_obstacle) {
        s.region.assign(pb.grid.size(), 0);
        for (std::size_t k = 0; k < pb.grid.size(); ++k) {
            s.region[k] = s.V[k] - s.obstacle[k] <= opts.tol;
            if (s.region[k]) s.policy.actions[k] = Action{ActionKind::stop, 0, 0};
            else if (s.policy.actions[k].kind == ActionKind::stop) s.policy.actions[k] = Action{};
        }
    }
    return s;
}

}  // namespace detail

/// Howard's algorithm for max_a { L_a V + g_a } = 0.
inline Solution policy_iteration(const ProblemSpec& pb, const SolveOptions& opts = {}) {
    return detail::howard_solve(pb, opts, false);
}

/// Stopping problem max { L V + g, psi - V } = 0 by policy iteration over the
/// continue/stop branches. The stop region is {V - psi <= tol}.
inline Solution solve_obstacle(const ProblemSpec& pb, const SolveOptions& opts = {}) {
    if (!pb.obstacle) throw InvalidArgument("solve_obstacle: problem has no obstacle");
    return detail::howard_solve(pb, opts, true);
}

struct Intervention {
    GridFunction value;
    std::vector<std::size_t> target;
};

/// (M v)(x) = max over nodes y of v(y) - c0 |y - x| - c1, with the first
/// maximizing node as target. This is a lower bound of the continuum sup.
inline Intervention intervention_operator(const GridFunction& v, double c0, double c1, std::size_t threads = 1) {
    if (!(c0 > 0.0) || !(c1 > 0.0)) throw InvalidArgument("intervention: costs must be positive");
    const Grid& g = v.grid();
    const std::size_t N = g.size();
    std::vector<Vector> nodes(N);
    for (std::size_t k = 0; k < N; ++k) nodes[k] = g.node(k);
    std::vector<double> mv(N);
    std::vector<std::size_t> target(N);
    parallel_for(N, threads, [&](std::size_t k) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t y = 0; y < N; ++y) {
            const double val = v[y] - c0 * (nodes[y] - nodes[k]).norm() - c1;
            if (val > best) {
                best = val;
                arg = y;
            }
        }
        mv[k] = best;
        target[k] = arg;
    });
    return {GridFunction(g, std::move(mv)), std::move(target)};
}

/// Impulse QVI by outer fixed point V_{k+1} = VI(obstacle = M V_k), started
/// from the constant supersolution max(0, max g/rho). Iterates are checked
/// to be pointwise non-increasing.
inline Solution solve_impulse_qvi(const ProblemSpec& pb, const SolveOptions& opts = {}) {
    if (!pb.impulse_costs) throw InvalidArgument("solve_impulse_qvi: problem has no impulse costs");
    detail::check_options(opts);
    const auto t0 = std::chrono::steady_clock::now();
    const auto gens = discretize_all(pb, pb.grid, opts.threads);
    if (detail::min_rho(gens) < opts.rho_min)
        throw InvalidArgument("solve: rho falls below the declared rho_min " + std::to_string(opts.rho_min));
    const std::size_t N = pb.grid.size();
    const double c0 = pb.impulse_costs->c0, c1 = pb.impulse_costs->c1;

    double top = 0.0;
    for (const auto& G : gens)
        for (std::size_t k = 0; k < N; ++k)
            if (!G.boundary[k]) top = std::max(top, G.source[k] / G.rho[k]);
    std::vector<double> v(N, top);

    SolveReport rep;
    rep.linear_solver = to_string(opts.linear_solver);
    std::vector<std::size_t> option(N, 0);
    Intervention mv = intervention_operator(GridFunction(pb.grid, v), c0, c1, opts.threads);
    HowardResult hr;
    // the spread of rounding between inner solves
    const double slack = 10.0 * (opts.inner_tol > 0.0 ? opts.inner_tol : 0.1 * opts.tol);
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        std::vector<double> psi(mv.value.values().begin(), mv.value.values().end());
        hr = howard(gens, &psi, option, v, opts);
        if (!hr.report.converged) {
            rep.iterations += hr.report.iterations;
            throw NonConvergence("solve_impulse_qvi: inner obstacle solve did not converge at outer step " +
                                 std::to_string(it));
        }
        double change = 0.0, increase = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
            change = std::max(change, std::abs(hr.values[k] - v[k]));
            increase = std::max(increase, hr.values[k] - v[k]);
        }
        if (increase > slack) rep.outer_monotone = false;
        rep.outer_worst_increase = std::max(rep.outer_worst_increase, increase);
        rep.outer_changes.push_back(change);
        rep.iterations += hr.report.iterations;
        rep.linear_iterations += hr.report.linear_iterations;
        for (double r : hr.report.residual_history) rep.residual_history.push_back(r);
        for (auto c : hr.report.policy_changes) rep.policy_changes.push_back(c);
        v = hr.values;
        option = hr.option;
        mv = intervention_operator(GridFunction(pb.grid, v), c0, c1, opts.threads);
        if (change <= opts.tol) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.outer_monotone) rep.warnings.push_back("outer QVI iterates increased somewhere");

    // final residual of the QVI with the obstacle M V of the returned V
    double res = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        double best = mv.value[k] - v[k];
        for (const auto& G : gens) best = std::max(best, G.row_value(k, v));
        res = std::max(res, std::abs(best));
    }
    rep.residual = res;
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Solution s;
    s.V = GridFunction(pb.grid, v);
    s.policy.grid = pb.grid;
    s.policy.actions.resize(N);
    s.region.assign(N, 0);
    for (std::size_t k = 0; k < N; ++k) {
        s.region[k] = v[k] - mv.value[k] <= opts.tol;
        s.policy.actions[k] = s.region[k] ? Action{ActionKind::impulse, 0, mv.target[k]} : Action{ActionKind::control, 0, 0};
    }
    s.obstacle.assign(mv.value.values().begin(), mv.value.values().end());
    s.report = std::move(rep);
    return s;
}

/// Dispatch on the problem class.
inline Solution solve(const ProblemSpec& pb, const SolveOptions& opts) {
    switch (pb.cls) {
        case problems::ProblemClass::drift_control: return policy_iteration(pb, opts);
        case problems::ProblemClass::optimal_stopping: return solve_obstacle(pb, opts);
        case problems::ProblemClass::impulse_control: return solve_impulse_qvi(pb, opts);
    }
    throw InvalidArgument("solve: unknown problem class");
}

struct ResidualField {
    std::vector<double> values;         ///< -max_a (L_a v + g_a); 0 where not interior
    std::vector<std::uint8_t> interior; ///< nodes carrying a PDE row for every control
    double min_interior = std::numeric_limits<double>::infinity();
};

/// Discrete certificate of the supersolution property: x -> -max_a (L_a v + g_a)
/// at interior nodes with the monotone stencil in place of test functions.
inline ResidualField supersolution_residual(const GridFunction& v, const ProblemSpec& pb, std::size_t threads = 1) {
    if (!(v.grid() == pb.grid)) throw InvalidArgument("supersolution_residual: grid mismatch");
    const auto gens = discretize_all(pb, pb.grid, threads);
    const std::size_t N = pb.grid.size();
    ResidualField out;
    out.values.assign(N, 0.0);
    out.interior.assign(N, 1);
    for (std::size_t k = 0; k < N; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& G : gens) {
            if (G.boundary[k]) out.interior[k] = 0;
            best = std::max(best, G.row_value(k, v.values()));
        }
        if (out.interior[k]) {
            out.values[k] = -best;
            out.min_interior = std::min(out.min_interior, -best);
        }
    }
    return out;
}

/// Complementarity margins of an obstacle solution on interior nodes.
struct Complementarity {
    double worst_dominance = std::numeric_limits<double>::infinity();  ///< min (V - psi)
    double worst_super = std::numeric_limits<double>::infinity();      ///< min -(L V + g)
    double worst_min = 0.0;                                            ///< max |min(V - psi, -(L V + g))|
};

inline Complementarity complementarity(const GridFunction& V, const ProblemSpec& pb, std::span<const double> psi,
                                       std::size_t threads = 1) {
    const auto res = supersolution_residual(V, pb, threads);
    Complementarity c;
    for (std::size_t k = 0; k < V.size(); ++k) {
        if (!res.interior[k]) continue;
        const double dom = V[k] - psi[k];
        c.worst_dominance = std::min(c.worst_dominance, dom);
        c.worst_super = std::min(c.worst_super, res.values[k]);
        c.worst_min = std::max(c.worst_min, std::abs(std::min(dom, res.values[k])));
    }
    return c;
}

}  // namespace smoothfit::solver
