#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothfit/errors.hpp"
#include "smoothfit/lattice.hpp"
#include "smoothfit/parallel.hpp"
#include "smoothfit/policy.hpp"
#include "smoothfit/problems.hpp"
#include "smoothfit/regularity.hpp"
#include "smoothfit/solver.hpp"

namespace smoothfit::synthesis {

using lattice::Grid;
using lattice::GridFunction;
using problems::ProblemSpec;

namespace detail {

inline std::span<const double> as_span(const Vector& x) {
    return {x.data(), static_cast<std::size_t>(x.size())};
}

inline Matrix beta1_columns(const ProblemSpec& pb, const Vector& x) {
    const auto n = static_cast<Eigen::Index>(pb.n);
    const auto A = static_cast<Eigen::Index>(pb.controls.size());
    Matrix cols(n, A);
    for (Eigen::Index a = 0; a < A; ++a)
        for (Eigen::Index i = 0; i < n; ++i)
            cols(i, a) = pb.drift_split->beta1[static_cast<std::size_t>(i)](as_span(x), pb.controls[static_cast<std::size_t>(a)]);
    return cols;
}

inline void require_split(const ProblemSpec& pb, const char* who) {
    if (!pb.drift_split) throw InvalidArgument(std::string(who) + ": problem has no drift split");
}

}  // namespace detail

/// S(x) = span of beta1(x, a) over the sampled controls.
inline regularity::RangeBasis s_basis(const ProblemSpec& pb, const Vector& x, double tau_rank = 1e-8) {
    detail::require_split(pb, "s_basis");
    return regularity::span_basis(detail::beta1_columns(pb, x), x, tau_rank);
}

struct StructurePoint {
    Vector x;
    std::size_t rank_S = 0;
    std::size_t rank_sigma = 0;
    double defect = 0.0;  ///< ||(I - P_sigma) P_S||_2
    bool contained = true;
};

struct StructureReport {
    std::vector<StructurePoint> points;
    double worst_defect = 0.0;
    std::size_t worst_index = 0;
    bool pass = true;
};

/// Checks S(x) inside range(sigma(x)) at each sample by ||(I - P_sigma) P_S|| <= 1e-8.
inline StructureReport structure_check(const ProblemSpec& pb, const std::vector<Vector>& samples,
                                       double tau_rank = 1e-8) {
    detail::require_split(pb, "structure_check");
    StructureReport rep;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vector& x = samples[i];
        const auto S = s_basis(pb, x, tau_rank);
        const auto R = regularity::range_basis(pb, x, tau_rank);
        const Matrix I = Matrix::Identity(static_cast<Eigen::Index>(pb.n), static_cast<Eigen::Index>(pb.n));
        const Matrix D = (I - R.projector) * S.projector;
        StructurePoint sp;
        sp.x = x;
        sp.rank_S = S.rank;
        sp.rank_sigma = R.rank;
        Eigen::JacobiSVD<Matrix> svd(D);
        sp.defect = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
        sp.contained = sp.defect <= 1e-8;
        if (sp.defect > rep.worst_defect || i == 0) {
            rep.worst_defect = std::max(rep.worst_defect, sp.defect);
            rep.worst_index = i;
        }
        rep.pass = rep.pass && sp.contained;
        rep.points.push_back(std::move(sp));
    }
    return rep;
}

struct FeedbackResult {
    FeedbackPolicy policy;
    /// D_S V at the nodes where it was computed (zero elsewhere).
    std::vector<Vector> gradient;
    std::vector<std::uint8_t> computed;
};

/// Nodes at least kFeedbackMargin spacings from every face carry their own
/// argmax; the rest copy the nearest such node. The margin is twice the widest
/// difference step so that one-sided quotients never touch boundary rows.
inline constexpr std::size_t kFeedbackMargin = 8;

inline bool feedback_interior(const Grid& g, std::size_t k) {
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const std::size_t ki = g.axis_index(k, i);
        if (ki < kFeedbackMargin || ki + kFeedbackMargin + 1 > g.points()[i]) return false;
    }
    return true;
}

/// G(x) = first-occurrence argmax_a { g(x,a) + <beta1(x,a), D_S V(x)> } with
/// D_S V the projected gradient over the S(x) basis.
inline FeedbackResult feedback_map(const GridFunction& V, const ProblemSpec& pb, std::size_t threads = 1,
                                   double tau_rank = 1e-8) {
    detail::require_split(pb, "feedback_map");
    const Grid& g = V.grid();
    if (!(g == pb.grid)) throw InvalidArgument("feedback_map: grid mismatch");
    for (std::size_t i = 0; i < g.dim(); ++i)
        if (g.points()[i] < 2 * kFeedbackMargin + 1)
            throw InvalidArgument("feedback_map: need at least 17 points per axis");
    const std::size_t N = g.size();
    FeedbackResult out;
    out.policy.grid = g;
    out.policy.actions.assign(N, Action{});
    out.gradient.assign(N, Vector::Zero(static_cast<Eigen::Index>(pb.n)));
    out.computed.assign(N, 0);

    parallel_for(N, threads, [&](std::size_t k) {
        if (!feedback_interior(g, k)) return;
        const Vector x = g.node(k);
        const auto S = s_basis(pb, x, tau_rank);
        const Vector grad = S.rank ? regularity::projected_gradient(V, x, S) : Vector::Zero(x.size());
        std::size_t arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < pb.controls.size(); ++a) {
            double val = pb.coefficients.g(detail::as_span(x), pb.controls[a]);
            for (std::size_t i = 0; i < pb.n; ++i)
                val += pb.drift_split->beta1[i](detail::as_span(x), pb.controls[a]) * grad[static_cast<Eigen::Index>(i)];
            if (val > best) {
                best = val;
                arg = a;
            }
        }
        out.policy.actions[k] = Action{ActionKind::control, arg, 0};
        out.gradient[k] = grad;
        out.computed[k] = 1;
    });

    for (std::size_t k = 0; k < N; ++k) {
        if (out.computed[k]) continue;
        std::vector<std::size_t> idx = g.multi_index(k);
        for (std::size_t i = 0; i < g.dim(); ++i) idx[i] = std::clamp<std::size_t>(idx[i], kFeedbackMargin, g.points()[i] - kFeedbackMargin - 1);
        out.policy.actions[k] = out.policy.actions[g.flat_index(idx)];
    }
    return out;
}

/// The do-nothing policy: smallest-norm control, never stop, never intervene.
inline FeedbackPolicy never_act_policy(const ProblemSpec& pb) {
    FeedbackPolicy p;
    p.grid = pb.grid;
    p.actions.assign(pb.grid.size(), Action{ActionKind::control, pb.controls.smallest(), 0});
    return p;
}

/// Stopping/impulse policy taken from a solution (its region and targets).
inline FeedbackPolicy policy_of(const solver::Solution& s) { return s.policy; }

struct SimulationOptions {
    std::size_t n_paths = 4000;
    double dt = 0.01;
    /// 0 selects -log(tail_tolerance) / rho_min.
    double T_max = 0.0;
    double tail_tolerance = 1e-6;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    bool antithetic = false;
};

struct SimulationEstimate {
    Vector x0;
    std::size_t n_paths = 0;
    double dt = 0.0;
    double T_max = 0.0;
    double mean = 0.0;
    double stderr_ = 0.0;
    /// Discounted bound on value lost by truncation at T_max and by absorption.
    double tail_bound = 0.0;
    double absorbed_fraction = 0.0;
    std::uint64_t seed = 0;
    std::string seeding = "splitmix64(master) ^ splitmix64(path + c), per-path mt19937_64";
};

namespace detail {

struct Bounds {
    double rho_min = std::numeric_limits<double>::infinity();
    double value_sup = 0.0;  ///< sup |g| / rho_min plus sup |payoff|
};

inline Bounds problem_bounds(const ProblemSpec& pb) {
    Bounds b;
    double gsup = 0.0, psup = 0.0;
    for (std::size_t k = 0; k < pb.grid.size(); ++k) {
        const Vector x = pb.grid.node(k);
        for (std::size_t a = 0; a < pb.controls.size(); ++a) {
            b.rho_min = std::min(b.rho_min, pb.coefficients.rho(as_span(x), pb.controls[a]));
            gsup = std::max(gsup, std::abs(pb.coefficients.g(as_span(x), pb.controls[a])));
        }
        if (pb.obstacle) psup = std::max(psup, std::abs(pb.obstacle_at(x)));
    }
    b.value_sup = (b.rho_min > 0.0 ? gsup / b.rho_min : std::numeric_limits<double>::infinity()) + psup;
    if (pb.impulse_costs) b.value_sup += pb.impulse_costs->c1 + pb.impulse_costs->c0 * pb.grid.diameter();
    return b;
}

struct PathResult {
    double value = 0.0;
    double tail = 0.0;
    bool absorbed = false;
};

}  // namespace detail

/// Euler-Maruyama simulation of the discounted payoff under `policy` from x0.
/// Running reward is integrated exactly over each step with left-endpoint
/// g and rho; stopping is checked at t = 0 and after every step; at most one
/// impulse per step; paths leaving the box are absorbed.
inline SimulationEstimate simulate(const ProblemSpec& pb, const FeedbackPolicy& policy, const Vector& x0,
                                   const SimulationOptions& opts) {
    if (!(opts.dt > 0.0)) throw InvalidArgument("simulate: dt must be > 0");
    if (opts.n_paths == 0) throw InvalidArgument("simulate: n_paths must be positive");
    if (opts.antithetic && opts.n_paths % 2 != 0) throw InvalidArgument("simulate: antithetic needs an even n_paths");
    if (!(policy.grid == pb.grid) || policy.actions.size() != pb.grid.size())
        throw InvalidArgument("simulate: policy grid does not match the problem");
    for (const auto& a : policy.actions) {
        if (a.kind == ActionKind::control && a.control >= pb.controls.size())
            throw InvalidArgument("simulate: policy control index out of range");
        if (a.kind == ActionKind::stop && !pb.obstacle) throw InvalidArgument("simulate: stop action without obstacle");
        if (a.kind == ActionKind::impulse && (!pb.impulse_costs || a.target >= pb.grid.size()))
            throw InvalidArgument("simulate: invalid impulse action");
    }
    if (!pb.grid.contains(x0)) throw InvalidArgument("simulate: x0 outside the grid box");
    const auto bounds = detail::problem_bounds(pb);
    if (!(bounds.rho_min > 0.0)) throw InvalidArgument("simulate: tail tolerance unachievable with rho_min = 0");
    if (!(opts.tail_tolerance > 0.0 && opts.tail_tolerance < 1.0))
        throw InvalidArgument("simulate: tail tolerance must lie in (0, 1)");
    double T = opts.T_max;
    if (T == 0.0) T = -std::log(opts.tail_tolerance) / bounds.rho_min;
    if (!(T > 0.0)) throw InvalidArgument("simulate: T_max must be positive");
    if (std::exp(-bounds.rho_min * T) > opts.tail_tolerance * (1.0 + 1e-12))
        throw InvalidArgument("simulate: T_max too short for the declared tail tolerance");

    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / opts.dt - 1e-9));
    const std::size_t n = pb.n, m = pb.m;
    const Grid& g = pb.grid;
    std::vector<Vector> nodes;
    bool has_impulse = false;
    for (const auto& a : policy.actions) has_impulse = has_impulse || a.kind == ActionKind::impulse;
    if (has_impulse) {
        nodes.resize(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) nodes[k] = g.node(k);
    }

    const std::size_t streams = opts.antithetic ? opts.n_paths / 2 : opts.n_paths;
    std::vector<detail::PathResult> results(opts.n_paths);

    parallel_for(streams, opts.threads, [&](std::size_t s) {
        std::mt19937_64 rng(derive_seed(opts.seed, s));
        std::normal_distribution<double> normal;
        const int copies = opts.antithetic ? 2 : 1;
        std::vector<double> zs;
        zs.reserve(steps * m);
        for (int copy = 0; copy < copies; ++copy) {
            detail::PathResult r;
            Vector X = x0;
            double Lambda = 0.0, t = 0.0, total = 0.0;
            bool done = false;
            auto stop_check = [&] {
                const Action& act = policy.at(X);
                if (act.kind == ActionKind::stop) {
                    total += std::exp(-Lambda) * pb.obstacle_at(X);
                    done = true;
                }
            };
            stop_check();
            for (std::size_t step = 0; step < steps && !done; ++step) {
                const double h = std::min(opts.dt, T - t);
                if (!(h > 0.0)) break;
                Action act = policy.at(X);
                if (act.kind == ActionKind::impulse) {
                    const Vector& y = nodes[act.target];
                    total += std::exp(-Lambda) * (-pb.impulse_costs->c0 * (y - X).norm() - pb.impulse_costs->c1);
                    X = y;
                    act = Action{ActionKind::control, 0, 0};
                }
                const auto c = pb.evaluate(X, act.control);
                const double disc = std::exp(-Lambda);
                total += c.rho > 0.0 ? disc * c.g * (1.0 - std::exp(-c.rho * h)) / c.rho : disc * c.g * h;
                Lambda += c.rho * h;
                const double sq = std::sqrt(h);
                for (std::size_t i = 0; i < n; ++i) {
                    double dw = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        double zz;
                        if (copy == 0) {
                            zz = normal(rng);
                            if (opts.antithetic) zs.push_back(zz);
                        } else {
                            zz = -zs[step * n * m + i * m + j];
                        }
                        dw += c.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * zz;
                    }
                    X[static_cast<Eigen::Index>(i)] += c.beta[static_cast<Eigen::Index>(i)] * h + sq * dw;
                }
                t += h;
                if (!g.contains(X, 0.0)) {
                    r.absorbed = true;
                    r.tail = std::exp(-Lambda) * bounds.value_sup;
                    done = true;
                    break;
                }
                stop_check();
            }
            if (!done) r.tail = std::exp(-Lambda) * bounds.value_sup;
            r.value = total;
            results[opts.antithetic ? 2 * s + static_cast<std::size_t>(copy) : s] = r;
        }
    });

    // aggregate in path order with pairwise sums
    std::vector<double> samples;
    if (opts.antithetic) {
        for (std::size_t s = 0; s < streams; ++s) samples.push_back(0.5 * (results[2 * s].value + results[2 * s + 1].value));
    } else {
        for (const auto& r : results) samples.push_back(r.value);
    }
    const double count = static_cast<double>(samples.size());
    const double mean = pairwise_sum(samples) / count;
    std::vector<double> dev(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) dev[i] = (samples[i] - mean) * (samples[i] - mean);
    const double var = samples.size() > 1 ? pairwise_sum(dev) / (count - 1.0) : 0.0;
    std::vector<double> tails(results.size()), absorbed(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        tails[i] = results[i].tail;
        absorbed[i] = results[i].absorbed ? 1.0 : 0.0;
    }

    SimulationEstimate est;
    est.x0 = x0;
    est.n_paths = opts.n_paths;
    est.dt = opts.dt;
    est.T_max = T;
    est.mean = mean;
    est.stderr_ = std::sqrt(var / count);
    est.tail_bound = pairwise_sum(tails) / static_cast<double>(results.size());
    est.absorbed_fraction = pairwise_sum(absorbed) / static_cast<double>(results.size());
    est.seed = opts.seed;
    return est;
}

struct GapEntry {
    Vector x0;
    double value = 0.0;  ///< V(x0)
    SimulationEstimate estimate;
    double gap = 0.0;        ///< V(x0) - mean
    double threshold = 0.0;  ///< 3 stderr + allowance + tail bound + rounding floor
    bool significantly_positive = false;
    bool significantly_negative = false;
};

/// gap(x0) = V(x0) - simulated payoff. Positive beyond the threshold means a
/// suboptimal policy; negative beyond it points at a solver error.
inline std::vector<GapEntry> verification_gap(const GridFunction& V, const ProblemSpec& pb,
                                              const FeedbackPolicy& policy, const std::vector<Vector>& x0_list,
                                              const SimulationOptions& opts, double allowance = 0.0) {
    std::vector<GapEntry> out;
    for (std::size_t i = 0; i < x0_list.size(); ++i) {
        GapEntry e;
        e.x0 = x0_list[i];
        e.value = lattice::interpolate(V, e.x0);
        SimulationOptions o = opts;
        o.seed = derive_seed(opts.seed, 0x5eedull + i);
        e.estimate = simulate(pb, policy, e.x0, o);
        e.gap = e.value - e.estimate.mean;
        const double rounding = 1e-12 * std::max({1.0, std::abs(e.value), std::abs(e.estimate.mean)});
        e.threshold = 3.0 * e.estimate.stderr_ + allowance + e.estimate.tail_bound + rounding;
        e.significantly_positive = e.gap > e.threshold;
        e.significantly_negative = e.gap < -e.threshold;
        out.push_back(std::move(e));
    }
    return out;
}

struct FreezeOptions {
    double tol = 1e-8;
    solver::LinearSolver linear_solver = solver::LinearSolver::gauss_seidel;
    std::size_t max_sweeps = 5000000;
    std::size_t threads = 1;
};

struct FreezeResult {
    GridFunction V_frozen;
    std::vector<double> source;
    double sup_gap = 0.0;
    std::size_t sweeps = 0;
};

/// Freezes the nonlinear part at V: s(x) = max_a { g(x,a) + <beta1(x,a), D V(x)> }
/// with D V the same upwind differences the scheme uses for beta1, then solves
/// the linear problem L0 v + s = 0 with v = V on the boundary, starting the
/// iteration from zero so that the gap reflects the inner tolerance.
inline FreezeResult freeze_and_resolve(const GridFunction& V, const ProblemSpec& pb, const FreezeOptions& opts = {}) {
    detail::require_split(pb, "freeze_and_resolve");
    if (!(opts.tol > 0.0)) throw InvalidArgument("freeze_and_resolve: tolerances must be > 0");
    const Grid& g = V.grid();
    if (!(g == pb.grid)) throw InvalidArgument("freeze_and_resolve: grid mismatch");
    const std::size_t N = g.size();
    const auto base = solver::discretize(pb, g, 0, {true, opts.threads});

    FreezeResult out;
    out.source.assign(N, 0.0);
    std::vector<std::uint8_t> dirichlet(N, 0);
    for (std::size_t k = 0; k < N; ++k) dirichlet[k] = g.on_face(k) || base.boundary[k];
    parallel_for(N, opts.threads, [&](std::size_t k) {
        if (dirichlet[k]) return;
        const Vector x = g.node(k);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < pb.controls.size(); ++a) {
            double val = pb.coefficients.g(detail::as_span(x), pb.controls[a]);
            for (std::size_t i = 0; i < pb.n; ++i) {
                const double b = pb.drift_split->beta1[i](detail::as_span(x), pb.controls[a]);
                const std::size_t s = g.stride(i);
                if (b > 0.0) val += b * (V[k + s] - V[k]) / g.spacing(i);
                else if (b < 0.0) val += b * (V[k] - V[k - s]) / g.spacing(i);
            }
            best = std::max(best, val);
        }
        out.source[k] = best;
    });

    // the base generator with the frozen source; identity rows on the boundary
    solver::DiscreteGenerator frozen = base;
    frozen.source = out.source;
    std::vector<solver::RowChoice> rows(N);
    for (std::size_t k = 0; k < N; ++k) rows[k] = dirichlet[k] ? solver::RowChoice{nullptr, V[k]} : solver::RowChoice{&frozen, 0.0};
    std::vector<double> v(N, 0.0);
    solver::SolveOptions so;
    so.tol = opts.tol;
    so.inner_tol = opts.tol;
    so.linear_solver = opts.linear_solver;
    so.max_sweeps = opts.max_sweeps;
    out.sweeps = solver::solve_linear(rows, v, so);

    for (std::size_t k = 0; k < N; ++k)
        if (!dirichlet[k]) out.sup_gap = std::max(out.sup_gap, std::abs(v[k] - V[k]));
    out.V_frozen = GridFunction(g, std::move(v));
    return out;
}

}  // namespace smoothfit::synthesis
