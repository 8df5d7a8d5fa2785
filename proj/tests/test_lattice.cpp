#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace smoothfit;
using namespace smoothfit::lattice;
using sft::vec;

TEST(Grid, OneDimensionalSpacingAndNodes) {
    const Grid g = build_grid({0.0}, {1.0}, {3});
    EXPECT_EQ(g.dim(), 1u);
    EXPECT_EQ(g.size(), 3u);
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.5);
    EXPECT_EQ(g.node(0)[0], 0.0);
    EXPECT_EQ(g.node(1)[0], 0.5);
    EXPECT_EQ(g.node(2)[0], 1.0);
}

TEST(Grid, TwoDimensionalCount) {
    const Grid g = build_grid({0.0, 0.0}, {2.0, 1.0}, {5, 3});
    EXPECT_EQ(g.size(), 15u);
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.5);
    EXPECT_DOUBLE_EQ(g.spacing(1), 0.5);
}

TEST(Grid, RejectsNonPositiveExtent) {
    EXPECT_THROW(build_grid({1.0}, {0.0}, {3}), InvalidArgument);
    EXPECT_THROW(build_grid({0.0}, {0.0}, {3}), InvalidArgument);
}

TEST(Grid, RejectsDimensionMismatchAndTooFewPoints) {
    EXPECT_THROW(build_grid({0.0, 0.0}, {1.0}, {3, 3}), InvalidArgument);
    EXPECT_THROW(build_grid({0.0}, {1.0}, {2}), InvalidArgument);
    EXPECT_THROW(build_grid({0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}, {3, 3, 3, 3, 3}), InvalidArgument);
}

TEST(Grid, NodeCoordinatesAreBitExact) {
    const Grid g = build_grid({-1.3, 0.2}, {2.9, 5.0}, {17, 9});
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto idx = g.multi_index(k);
        EXPECT_EQ(g.flat_index(idx), k);
        const Vector x = g.node(k);
        for (std::size_t i = 0; i < 2; ++i)
            EXPECT_EQ(x[static_cast<Eigen::Index>(i)], g.lower()[i] + static_cast<double>(idx[i]) * g.spacing(i));
    }
}

TEST(Grid, RowMajorOrderFirstAxisSlowest) {
    const Grid g = build_grid({0.0, 0.0}, {1.0, 1.0}, {3, 4});
    EXPECT_EQ(g.stride(0), 4u);
    EXPECT_EQ(g.stride(1), 1u);
    EXPECT_EQ(g.multi_index(5), (std::vector<std::size_t>{1, 1}));
}

TEST(Interpolate, ReproducesLinearFunction) {
    const Grid g = build_grid({0.0}, {1.0}, {5});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return 2.0 * x[0]; });
    EXPECT_DOUBLE_EQ(interpolate(f, vec({0.25})), 0.5);
}

TEST(Interpolate, ExactAtNodes) {
    const Grid g = build_grid({-1.0, 0.0}, {1.0, 2.0}, {7, 5});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<double> v(g.size());
    for (auto& x : v) x = nd(rng);
    const GridFunction f(g, v);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(interpolate(f, g.node(k)), v[k]);
}

TEST(Interpolate, OutsideBoxThrows) {
    const Grid g = build_grid({0.0}, {1.0}, {5});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return x[0]; });
    EXPECT_THROW(interpolate(f, vec({1.1})), InvalidArgument);
    EXPECT_THROW(interpolate(f, vec({-0.01})), InvalidArgument);
}

TEST(InterpolateProperty, AffineFunctionsReproducedEverywhere) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 1; n <= 4; ++n) {
        std::vector<double> lo(n), hi(n);
        std::vector<std::size_t> pts(n);
        Vector a(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = -1.0 - u(rng);
            hi[i] = 1.0 + u(rng);
            pts[i] = 3 + static_cast<std::size_t>(4 * u(rng));
            a[static_cast<Eigen::Index>(i)] = 4.0 * u(rng) - 2.0;
        }
        const double c = u(rng);
        const Grid g(lo, hi, pts);
        const auto f = GridFunction::sample(g, [&](const Vector& x) { return a.dot(x) + c; });
        for (int t = 0; t < 200; ++t) {
            Vector x(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) x[static_cast<Eigen::Index>(i)] = lo[i] + (hi[i] - lo[i]) * u(rng);
            EXPECT_NEAR(interpolate(f, x), a.dot(x) + c, 1e-13);
        }
    }
}

TEST(GridFunction, RejectsNonFiniteAndWrongLength) {
    const Grid g = build_grid({0.0}, {1.0}, {3});
    EXPECT_THROW(GridFunction(g, {0.0, std::nan(""), 1.0}), InvalidArgument);
    EXPECT_THROW(GridFunction(g, {0.0, 1.0}), InvalidArgument);
}

TEST(Derivative, AbsoluteValueKinkSlopes) {
    const Grid g = build_grid({-1.0}, {1.0}, {201});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return std::abs(x[0]); });
    EXPECT_NEAR(one_sided_directional_derivative(f, vec({0.0}), vec({1.0}), Side::plus), 1.0, 1e-12);
    EXPECT_NEAR(one_sided_directional_derivative(f, vec({0.0}), vec({1.0}), Side::minus), -1.0, 1e-12);
}

TEST(Derivative, QuadraticWithExplicitSteps) {
    const Grid g = build_grid({0.0}, {1.0}, {1001});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return x[0] * x[0]; });
    const std::vector<double> steps{0.02, 0.01, 0.005};
    EXPECT_NEAR(one_sided_directional_derivative(f, vec({0.5}), vec({1.0}), Side::plus, steps), 1.0, 1e-6);
    EXPECT_NEAR(one_sided_directional_derivative(f, vec({0.5}), vec({1.0}), Side::minus, steps), 1.0, 1e-6);
}

TEST(Derivative, Preconditions) {
    const Grid g = build_grid({0.0}, {1.0}, {101});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return x[0]; });
    const std::vector<double> one{0.01};
    const std::vector<double> up{0.01, 0.02};
    const std::vector<double> big{0.5, 0.25};
    EXPECT_THROW(one_sided_directional_derivative(f, vec({0.5}), vec({1.0}), Side::plus, one), InvalidArgument);
    EXPECT_THROW(one_sided_directional_derivative(f, vec({0.5}), vec({1.0}), Side::plus, up), InvalidArgument);
    EXPECT_THROW(one_sided_directional_derivative(f, vec({0.9}), vec({1.0}), Side::plus, big), InvalidArgument);
    EXPECT_THROW(one_sided_directional_derivative(f, vec({0.5}), vec({2.0}), Side::plus, big), InvalidArgument);
}

TEST(DerivativeProperty, PlusAlongHEqualsMinusOfMinusAlongNegatedH) {
    const Grid g = build_grid({-1.0, -1.0}, {1.0, 1.0}, {41, 41});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::vector<double> v(g.size());
    for (auto& x : v) x = nd(rng);
    const GridFunction f(g, v);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int t = 0; t < 50; ++t) {
        const Vector x = vec({u(rng), u(rng)});
        Vector h = vec({nd(rng), nd(rng)});
        h /= h.norm();
        const double plus = one_sided_directional_derivative(f, x, h, Side::plus);
        const double minus = one_sided_directional_derivative(f, x, -h, Side::minus);
        EXPECT_NEAR(plus, -minus, 1e-12 * std::max(1.0, std::abs(plus)));
    }
}

TEST(DerivativeProperty, SidesAgreeForSmoothFunctions) {
    const Grid g = build_grid({-1.0, -1.0}, {1.0, 1.0}, {201, 201});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return std::sin(2 * x[0]) + x[0] * x[1] * x[1]; });
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 50; ++t) {
        const Vector x = vec({u(rng), u(rng)});
        Vector h = vec({nd(rng), nd(rng)});
        h /= h.norm();
        const double p = one_sided_directional_derivative(f, x, h, Side::plus);
        const double m = one_sided_directional_derivative(f, x, h, Side::minus);
        const double exact = (2 * std::cos(2 * x[0]) + x[1] * x[1]) * h[0] + 2 * x[0] * x[1] * h[1];
        EXPECT_NEAR(p, m, 5 * g.max_spacing());
        EXPECT_NEAR(0.5 * (p + m), exact, 5 * g.max_spacing());
    }
}

TEST(Stencil, FiniteDifferencesOnQuadratic) {
    const Grid g = build_grid({0.0}, {1.0}, {11});
    const auto f = GridFunction::sample(g, [](const Vector& x) { return x[0] * x[0]; });
    using O = Stencil::Order;
    EXPECT_NEAR(apply_stencil(f, 5, 0, {O::second_central, 1}), 2.0, 1e-10);
    EXPECT_NEAR(apply_stencil(f, 5, 0, {O::first_central, 2}), 1.0, 1e-12);
    EXPECT_NEAR(apply_stencil(f, 5, 0, {O::first_forward, 1}), 1.1, 1e-12);
    EXPECT_NEAR(apply_stencil(f, 5, 0, {O::first_backward, 1}), 0.9, 1e-12);
    EXPECT_THROW(apply_stencil(f, 0, 0, {O::first_backward, 1}), InvalidArgument);
    EXPECT_THROW(apply_stencil(f, 5, 0, {O::first_central, 0}), InvalidArgument);
}

TEST(Json, RoundTripIsBitExact) {
    const Grid g = build_grid({-0.3, 1.0 / 3.0}, {2.0 / 7.0 + 1.0, 5.0}, {9, 4});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> v(g.size());
    for (auto& x : v) x = nd(rng) * 1e-7 + nd(rng);
    const GridFunction f(g, v);
    const auto text = to_json(f).dump();
    const auto back = grid_function_from_json(nlohmann::json::parse(text));
    EXPECT_TRUE(back.grid() == g);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(back[k], v[k]);
}

TEST(Json, CorruptedInputRejected) {
    EXPECT_THROW(grid_function_from_json(nlohmann::json::parse(R"({"lower":[0],"upper":[1],"points":[3]})")),
                 InvalidArgument);
    EXPECT_THROW(grid_function_from_json(nlohmann::json::parse(R"({"lower":[0],"upper":[1],"points":[3],"values":[1,2]})")),
                 InvalidArgument);
}
