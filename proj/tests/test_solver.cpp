#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace smoothfit;
using namespace smoothfit::solver;
using nlohmann::json;
using problems::ProblemSpec;
using sft::vec;

namespace {

json coeffs(const std::string& beta, const std::string& sigma, const std::string& g, const std::string& rho) {
    return {{"beta", {beta}}, {"sigma", json::array({json::array({sigma})})}, {"g", g}, {"rho", rho}};
}

json unit_box(std::size_t points) { return {{"lower", {0.0}}, {"upper", {1.0}}, {"points", {points}}}; }

std::vector<double> unit(std::size_t N, std::size_t k) {
    std::vector<double> e(N, 0.0);
    e[k] = 1.0;
    return e;
}

/// Inner half of the box along every axis.
bool inner_half(const lattice::Grid& g, std::size_t k) {
    const Vector x = g.node(k);
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const double c = 0.5 * (g.lower()[i] + g.upper()[i]), r = 0.25 * (g.upper()[i] - g.lower()[i]);
        if (std::abs(x[static_cast<Eigen::Index>(i)] - c) > r + 1e-12) return false;
    }
    return true;
}

double boundary_of(const Solution& s) {
    // right end of the stop region connected to the left edge
    double b = s.V.grid().lower()[0];
    for (std::size_t k = 0; k < s.region.size() && s.region[k]; ++k) b = s.V.grid().node(k)[0];
    return b;
}

}  // namespace

TEST(Discretize, UnitDiffusionGivesCentralSecondDifference) {
    const auto pb = sft::problem({{"n", 1}, {"m", 1}, {"box", unit_box(11)}, {"coefficients", coeffs("0", "2^0.5", "0", "0")}});
    const auto G = discretize(pb, pb.grid, 0);
    const double h = 0.1;
    const std::size_t k = 5;
    EXPECT_FALSE(G.boundary[k]);
    EXPECT_NEAR(G.apply_row(k, unit(11, k)), -2.0 / (h * h), 1e-9);
    EXPECT_NEAR(G.apply_row(k, unit(11, k + 1)), 1.0 / (h * h), 1e-9);
    EXPECT_NEAR(G.apply_row(k, unit(11, k - 1)), 1.0 / (h * h), 1e-9);
    EXPECT_EQ(G.apply_row(k, unit(11, k + 2)), 0.0);
}

TEST(Discretize, PositiveDriftUsesForwardDifference) {
    const auto pb = sft::problem({{"n", 1}, {"m", 1}, {"box", unit_box(11)}, {"coefficients", coeffs("1", "0", "0", "0")}});
    const auto G = discretize(pb, pb.grid, 0);
    const double h = 0.1;
    EXPECT_NEAR(G.apply_row(4, unit(11, 4)), -1.0 / h, 1e-12);
    EXPECT_NEAR(G.apply_row(4, unit(11, 5)), 1.0 / h, 1e-12);
    EXPECT_EQ(G.apply_row(4, unit(11, 3)), 0.0);
}

TEST(Discretize, NegativeDriftUsesBackwardDifference) {
    const auto pb = sft::problem({{"n", 1}, {"m", 1}, {"box", unit_box(11)}, {"coefficients", coeffs("-2", "0", "0", "0")}});
    const auto G = discretize(pb, pb.grid, 0);
    EXPECT_NEAR(G.apply_row(4, unit(11, 3)), 20.0, 1e-12);
    EXPECT_NEAR(G.apply_row(4, unit(11, 4)), -20.0, 1e-12);
    EXPECT_EQ(G.apply_row(4, unit(11, 5)), 0.0);
}

class GeneratorInvariants : public ::testing::TestWithParam<std::string> {};

TEST_P(GeneratorInvariants, ConstantsMapToMinusRhoAndWeightsNonNegative) {
    const auto pb = problems::catalog_entry(GetParam()).problem;
    const auto gens = discretize_all(pb, pb.grid, 2);
    const std::vector<double> ones(pb.grid.size(), 1.0);
    for (const auto& G : gens) {
        EXPECT_GE(G.min_offdiagonal(), 0.0);
        for (std::size_t k = 0; k < G.size(); ++k) {
            if (G.boundary[k]) continue;
            EXPECT_NEAR(G.apply_row(k, ones), -G.rho[k], 1e-10 * std::max(1.0, std::abs(G.diag[k])));
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Catalog, GeneratorInvariants, ::testing::Values("B1", "B2", "B3", "B4", "I1"));

TEST(Discretize, DominantCrossDiffusionRejected) {
    // C = [[1,1],[1,1]] on an anisotropic grid: the axis-2 weight goes negative
    const json pj = {{"n", 2},
                     {"m", 1},
                     {"box", {{"lower", {0.0, 0.0}}, {"upper", {1.0, 5.0}}, {"points", {11, 11}}}},
                     {"coefficients",
                      {{"beta", {"0", "0"}}, {"sigma", json::array({json::array({"1"}), json::array({"1"})})}, {"g", "0"}, {"rho", "1"}}}};
    const auto pb = sft::problem(pj);
    try {
        discretize(pb, pb.grid, 0);
        FAIL() << "expected MonotonicityViolation";
    } catch (const MonotonicityViolation& e) {
        EXPECT_NE(std::string(e.what()).find("negative stencil weight"), std::string::npos);
    }
    // on a square grid the same diffusion is admissible
    auto square = pj;
    square["box"]["upper"] = {1.0, 1.0};
    const auto ok = sft::problem(square);
    EXPECT_GE(discretize(ok, ok.grid, 0).min_offdiagonal(), 0.0);
}

TEST(PolicyIteration, ConstantRewardGivesConstantValue) {
    const auto pb = sft::problem({{"n", 1}, {"m", 1}, {"box", unit_box(21)}, {"coefficients", coeffs("0", "0", "2", "0.5")}});
    const auto s = solve(pb, {});
    ASSERT_TRUE(s.report.converged);
    for (std::size_t k = 0; k < s.V.size(); ++k) EXPECT_NEAR(s.V[k], 4.0, 1e-12);
    EXPECT_LE(s.report.residual, 1e-12);
}

TEST(PolicyIteration, B4PolicyAttainsDiscreteHamiltonian) {
    const auto pb = problems::catalog_entry("B4").problem;
    const auto s = solve(pb, {});
    ASSERT_TRUE(s.report.converged);
    EXPECT_LE(s.report.residual, 1e-8);
    const auto gens = discretize_all(pb, pb.grid, 1);
    const auto v = s.V.values();
    for (std::size_t k = 0; k < pb.grid.size(); ++k) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& G : gens) best = std::max(best, G.row_value(k, v));
        const auto& act = s.policy.actions[k];
        ASSERT_EQ(act.kind, ActionKind::control);
        EXPECT_NEAR(gens[act.control].row_value(k, v), best, 1e-10);
        EXPECT_LE(std::abs(best), 1e-8);
    }
}

TEST(PolicyIteration, B4SelfConvergenceIsFirstOrder) {
    std::vector<Solution> sols;
    for (std::size_t pts : {1001u, 2001u, 4001u})
        sols.push_back(solve(sft::patched(problems::catalog_text::B4, {{"box", {{"points", {pts}}}}}), {}));
    // differences between consecutive levels on the coarse nodes of the inner half
    auto diff = [&](const Solution& c, const Solution& f) {
        double d = 0.0;
        for (std::size_t k = 0; k < c.V.size(); ++k)
            if (inner_half(c.V.grid(), k)) d = std::max(d, std::abs(c.V[k] - f.V[2 * k]));
        return d;
    };
    const double d1 = diff(sols[0], sols[1]), d2 = diff(sols[1], sols[2]);
    const double h = sols[1].V.grid().spacing(0);
    EXPECT_GT(d1, 0.0);
    EXPECT_LE(d2, 0.75 * d1);
    // C estimated from the coarser pair
    EXPECT_LE(d2, (d1 / (2.0 * h)) * h * 1.1);
}

TEST(PolicyIteration, ThreadCountDoesNotChangeResult) {
    const auto pb = problems::catalog_entry("B4").problem;
    SolveOptions o1, o4;
    o4.threads = 4;
    const auto a = solve(pb, o1), b = solve(pb, o4);
    for (std::size_t k = 0; k < a.V.size(); ++k) ASSERT_EQ(a.V[k], b.V[k]);
    EXPECT_EQ(a.report.iterations, b.report.iterations);
}

TEST(PolicyIteration, GaussSeidelAgreesWithDirect) {
    const auto pb = sft::patched(problems::catalog_text::B4, {{"box", {{"points", {201}}}}});
    SolveOptions gs;
    gs.linear_solver = LinearSolver::gauss_seidel;
    gs.tol = 1e-9;
    const auto a = solve(pb, {}), b = solve(pb, gs);
    ASSERT_TRUE(b.report.converged);
    for (std::size_t k = 0; k < a.V.size(); ++k) EXPECT_NEAR(a.V[k], b.V[k], 1e-7);
}

TEST(PolicyIteration, NonConvergenceIsReported) {
    const auto pb = problems::catalog_entry("B4").problem;
    SolveOptions o;
    o.max_iter = 1;
    o.cascade = false;
    const auto s = solve(pb, o);
    EXPECT_FALSE(s.report.converged);
}

TEST(PolicyIteration, RhoBelowDeclaredMinimumRejected) {
    const auto pb = problems::catalog_entry("B4").problem;
    SolveOptions o;
    o.rho_min = 2.0;
    EXPECT_THROW(solve(pb, o), InvalidArgument);
    SolveOptions bad;
    bad.tol = -1.0;
    EXPECT_THROW(solve(pb, bad), InvalidArgument);
}

TEST(Obstacle, ZeroPayoffGivesZeroValueAndStopsEverywhere) {
    const auto pb = sft::problem({{"class", "optimal_stopping"},
                                  {"n", 1},
                                  {"m", 1},
                                  {"box", unit_box(41)},
                                  {"obstacle", "0"},
                                  {"coefficients", coeffs("0.3", "0.2", "0", "0.1")}});
    const auto s = solve(pb, {});
    for (std::size_t k = 0; k < s.V.size(); ++k) {
        EXPECT_NEAR(s.V[k], 0.0, 1e-12);
        EXPECT_TRUE(s.region[k]);
    }
}

TEST(Obstacle, DominantPayoffIsStoppedImmediately) {
    const auto pb = sft::problem({{"class", "optimal_stopping"},
                                  {"n", 1},
                                  {"m", 1},
                                  {"box", unit_box(41)},
                                  {"obstacle", "1000"},
                                  {"coefficients", coeffs("x - 0.5", "0.2", "1", "1")}});
    const auto s = solve(pb, {});
    for (std::size_t k = 0; k < s.V.size(); ++k) {
        EXPECT_NEAR(s.V[k], 1000.0, 1e-9);
        EXPECT_TRUE(s.region[k]);
    }
}

class B1Solve : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        pb_ = new ProblemSpec(problems::catalog_entry("B1").problem);
        sol_ = new Solution(solve(*pb_, {}));
    }
    static void TearDownTestSuite() {
        delete sol_;
        delete pb_;
    }
    static ProblemSpec* pb_;
    static Solution* sol_;
};
ProblemSpec* B1Solve::pb_ = nullptr;
Solution* B1Solve::sol_ = nullptr;

TEST_F(B1Solve, FreeBoundaryWithinOnePercent) {
    ASSERT_TRUE(sol_->report.converged);
    const problems::PerpetualPut put{1.0, 0.0, 0.2, 0.05};
    EXPECT_NEAR(boundary_of(*sol_), put.boundary(), 0.01 * put.boundary());
}

TEST_F(B1Solve, ComplementarityAndGlobalSupersolution) {
    const double tol = 1e-8;
    const auto c = complementarity(sol_->V, *pb_, sol_->obstacle);
    EXPECT_GE(c.worst_dominance, -tol);
    EXPECT_GE(c.worst_super, -tol);
    EXPECT_LE(c.worst_min, tol);
    const auto r = supersolution_residual(sol_->V, *pb_);
    EXPECT_GE(r.min_interior, -tol);
}

TEST_F(B1Solve, StopRegionMatchesPayoffContact) {
    for (std::size_t k = 0; k < sol_->V.size(); ++k) {
        EXPECT_EQ(static_cast<bool>(sol_->region[k]), sol_->V[k] - sol_->obstacle[k] <= 1e-8);
        EXPECT_GE(sol_->V[k], sol_->obstacle[k] - 1e-8);
    }
}

TEST(Residual, AddingConstantRaisesResidualByRhoTimesConstant) {
    const auto pb = problems::catalog_entry("B4").problem;
    const auto s = solve(pb, {});
    const double c = 0.37;
    std::vector<double> shifted(s.V.values().begin(), s.V.values().end());
    for (auto& x : shifted) x += c;
    const auto r0 = supersolution_residual(s.V, pb);
    const auto r1 = supersolution_residual(GridFunction(pb.grid, shifted), pb);
    EXPECT_GE(r0.min_interior, -1e-8);
    for (std::size_t k = 0; k < shifted.size(); ++k)
        if (r0.interior[k]) EXPECT_GE(r1.values[k] - r0.values[k], 1.0 * c - 1e-10);
}

TEST(Comparison, LargerRewardNeverLowersValue) {
    {
        const auto lo = solve(problems::catalog_entry("B4").problem, {});
        const auto hi = solve(sft::patched(problems::catalog_text::B4, {{"coefficients", {{"g", "-x^2 - eps*a^2 + 0.1"}}}}), {});
        for (std::size_t k = 0; k < lo.V.size(); ++k) EXPECT_NEAR(hi.V[k] - lo.V[k], 0.1, 1e-8);
    }
    {
        const auto pb = sft::patched(problems::catalog_text::B1, {{"box", {{"points", {800}}}}});
        const auto lo = solve(pb, {});
        const auto hi = solve(sft::patched(problems::catalog_text::B1, {{"box", {{"points", {800}}}}, {"coefficients", {{"g", "0.1"}}}}), {});
        for (std::size_t k = 0; k < lo.V.size(); ++k) EXPECT_GE(hi.V[k], lo.V[k] - 1e-8);
    }
}

TEST(Intervention, ZeroFunctionPaysFixedCost) {
    const auto g = lattice::build_grid({-1.0}, {1.0}, {21});
    const auto v = GridFunction::sample(g, [](const Vector&) { return 0.0; });
    const auto m = intervention_operator(v, 1.0, 0.5);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_DOUBLE_EQ(m.value[k], -0.5);
}

TEST(Intervention, GentleSlopeStaysPut) {
    const auto g = lattice::build_grid({-1.0, 0.0}, {1.0, 1.0}, {11, 6});
    const auto v = GridFunction::sample(g, [](const Vector& x) { return 0.3 * x[0] - 0.2 * x[1]; });
    const auto m = intervention_operator(v, 1.0, 0.2, 3);
    for (std::size_t k = 0; k < g.size(); ++k) {
        EXPECT_NEAR(m.value[k], v[k] - 0.2, 1e-14);
        EXPECT_EQ(m.target[k], k);
    }
}

TEST(Intervention, AbsoluteValueAgainstBruteForce) {
    const auto g = lattice::build_grid({-1.0}, {1.0}, {201});
    const auto v = GridFunction::sample(g, [](const Vector& x) { return std::abs(x[0]); });
    const auto m = intervention_operator(v, 0.5, 0.1);
    EXPECT_NEAR(m.value[100], 0.4, 1e-14);
    for (std::size_t k = 0; k < g.size(); k += 7) {
        double best = -1e300;
        const double x = -1.0 + 0.01 * static_cast<double>(k);
        for (std::size_t y = 0; y < g.size(); ++y) {
            const double yy = -1.0 + 0.01 * static_cast<double>(y);
            best = std::max(best, std::abs(yy) - 0.5 * std::abs(yy - x) - 0.1);
        }
        EXPECT_NEAR(m.value[k], best, 1e-13);
    }
    EXPECT_THROW(intervention_operator(v, 0.0, 0.1), InvalidArgument);
    EXPECT_THROW(intervention_operator(v, 0.5, -0.1), InvalidArgument);
}

TEST(ImpulseQvi, ProhibitiveFixedCostMeansNoIntervention) {
    const auto pb = sft::patched(problems::catalog_text::I1, {{"impulse_costs", {{"c1", 1e6}}}});
    const auto s = solve(pb, {});
    ASSERT_TRUE(s.report.converged);
    const auto free = sft::patched(problems::catalog_text::I1, {{"class", "drift_control"}, {"impulse_costs", nullptr}});
    const auto f = solve(free, {});
    for (std::size_t k = 0; k < s.V.size(); ++k) {
        EXPECT_FALSE(s.region[k]);
        EXPECT_NEAR(s.V[k], f.V[k], 1e-8);
    }
}

TEST(ImpulseQvi, ZeroRewardGivesZeroValue) {
    const auto pb = sft::patched(problems::catalog_text::I1, {{"coefficients", {{"g", "0"}}}});
    const auto s = solve(pb, {});
    const auto m = intervention_operator(s.V, 0.1, 0.05);
    for (std::size_t k = 0; k < s.V.size(); ++k) {
        EXPECT_NEAR(s.V[k], 0.0, 1e-12);
        EXPECT_NEAR(s.V[k] - m.value[k], 0.05, 1e-12);
        EXPECT_FALSE(s.region[k]);
    }
}

TEST(ImpulseQvi, MeanRevertingBenchmarkProperties) {
    const auto pb = problems::catalog_entry("I1").problem;
    const double tol = 1e-8;
    const auto s = solve(pb, {});
    ASSERT_TRUE(s.report.converged);
    EXPECT_TRUE(s.report.outer_monotone);
    const auto m = intervention_operator(s.V, 0.1, 0.05);
    for (std::size_t k = 0; k < s.V.size(); ++k) EXPECT_GE(s.V[k], m.value[k] - tol);
    EXPECT_GE(supersolution_residual(s.V, pb).min_interior, -tol);
    // the action region is symmetric and excludes the origin
    std::size_t acted = 0;
    for (std::size_t k = 0; k < s.V.size(); ++k) {
        acted += s.region[k];
        EXPECT_EQ(s.region[k], s.region[s.V.size() - 1 - k]);
    }
    EXPECT_GT(acted, 0u);
    EXPECT_FALSE(s.region[s.V.size() / 2]);
}
