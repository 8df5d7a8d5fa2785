#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support.hpp"

using namespace smoothfit;
using problems::Expression;
using problems::VariableLayout;

namespace {

double eval(const std::string& text, std::vector<double> x, std::vector<double> a = {},
            const std::map<std::string, double>& c = {}) {
    const VariableLayout layout{x.size(), a.size()};
    return Expression::compile(text, layout, c)(x, a);
}

}  // namespace

TEST(Expression, ArithmeticAndPrecedence) {
    EXPECT_DOUBLE_EQ(eval("1 + 2*3", {0.0}), 7.0);
    EXPECT_DOUBLE_EQ(eval("(1 + 2)*3", {0.0}), 9.0);
    EXPECT_DOUBLE_EQ(eval("8 / 4 / 2", {0.0}), 1.0);
    EXPECT_DOUBLE_EQ(eval("10 - 3 - 2", {0.0}), 5.0);
    EXPECT_DOUBLE_EQ(eval("-2^2", {0.0}), -4.0);
    EXPECT_DOUBLE_EQ(eval("2^3^2", {0.0}), 512.0);
    EXPECT_DOUBLE_EQ(eval("2^-1", {0.0}), 0.5);
    EXPECT_DOUBLE_EQ(eval("1.5e1 + .5", {0.0}), 15.5);
}

TEST(Expression, VariablesAndAliases) {
    EXPECT_DOUBLE_EQ(eval("x", {3.0}), 3.0);
    EXPECT_DOUBLE_EQ(eval("x1", {3.0}), 3.0);
    EXPECT_DOUBLE_EQ(eval("x1*x2 - x3", {2.0, 5.0, 1.0}), 9.0);
    EXPECT_DOUBLE_EQ(eval("a*x", {2.0}, {-1.5}), -3.0);
    EXPECT_DOUBLE_EQ(eval("a1 + a2", {0.0}, {1.0, 2.0}), 3.0);
    EXPECT_THROW(eval("x", {1.0, 2.0}), InvalidArgument);
    EXPECT_THROW(eval("x3", {1.0, 2.0}), InvalidArgument);
    EXPECT_THROW(eval("a", {1.0}), InvalidArgument);
}

TEST(Expression, Functions) {
    EXPECT_DOUBLE_EQ(eval("exp(0)", {0.0}), 1.0);
    EXPECT_DOUBLE_EQ(eval("log(exp(2))", {0.0}), 2.0);
    EXPECT_DOUBLE_EQ(eval("abs(-3)", {0.0}), 3.0);
    EXPECT_DOUBLE_EQ(eval("max(1, x)", {4.0}), 4.0);
    EXPECT_DOUBLE_EQ(eval("min(1, x)", {4.0}), 1.0);
    EXPECT_DOUBLE_EQ(eval("pos(x)", {-4.0}), 0.0);
    EXPECT_DOUBLE_EQ(eval("pos(x)", {4.0}), 4.0);
    EXPECT_DOUBLE_EQ(eval("pow(x, 3)", {2.0}), 8.0);
}

TEST(Expression, NamedConstantsFold) {
    const auto e = Expression::compile("K - 2*s", {1, 0}, {{"K", 1.0}, {"s", 0.25}});
    EXPECT_TRUE(e.is_constant());
    EXPECT_DOUBLE_EQ(e.constant_value(), 0.5);
    EXPECT_TRUE(Expression::compile("0*1", {1, 0}).is_zero());
    EXPECT_FALSE(Expression::compile("x + a", {1, 1}).is_constant());
    EXPECT_TRUE(Expression::compile("x + a", {1, 1}).uses_control());
}

TEST(Expression, SyntaxErrorsNamePosition) {
    EXPECT_THROW(eval("1 +", {0.0}), InvalidArgument);
    EXPECT_THROW(eval("(1 + 2", {0.0}), InvalidArgument);
    EXPECT_THROW(eval("foo(1)", {0.0}), InvalidArgument);
    EXPECT_THROW(eval("max(1)", {0.0}), InvalidArgument);
    EXPECT_THROW(eval("unknown_const", {0.0}), InvalidArgument);
    EXPECT_THROW(eval("1 2", {0.0}), InvalidArgument);
    try {
        eval("1 + $", {0.0});
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("column"), std::string::npos);
    }
}

TEST(Expression, DomainErrors) {
    EXPECT_THROW(eval("log(x)", {-1.0}), DomainError);
    EXPECT_THROW(eval("log(x)", {0.0}), DomainError);
    EXPECT_THROW(eval("1 / x", {0.0}), DomainError);
    EXPECT_THROW(eval("exp(x)", {1000.0}), DomainError);
    EXPECT_THROW(eval("x^0.5", {-1.0}), DomainError);
}

TEST(Expression, ConstantFoldingReportsDomainErrors) { EXPECT_THROW(eval("log(-1)", {0.0}), InvalidArgument); }

TEST(Expression, DirectionalDerivativeMatchesAnalytic) {
    const auto e = Expression::compile("x1^2*x2 + exp(x2) - log(x1)", {2, 0});
    const std::vector<double> x{1.5, 0.3}, h{0.6, 0.8};
    bool kink = true;
    const auto d = e.directional(x, {}, h, kink);
    const double gx = 2 * x[0] * x[1] - 1 / x[0];
    const double gy = x[0] * x[0] + std::exp(x[1]);
    EXPECT_FALSE(kink);
    EXPECT_NEAR(d.v, e(x), 1e-15);
    EXPECT_NEAR(d.d, gx * h[0] + gy * h[1], 1e-12);
}

TEST(Expression, DirectionalDerivativeFlagsKinks) {
    const auto put = Expression::compile("pos(1 - x)", {1, 0});
    bool kink = false;
    const std::vector<double> at{1.0}, plus{1.0}, minus{-1.0};
    put.directional(at, {}, plus, kink);
    EXPECT_TRUE(kink);
    const std::vector<double> inside{0.5};
    const auto d = put.directional(inside, {}, plus, kink);
    EXPECT_FALSE(kink);
    EXPECT_DOUBLE_EQ(d.d, -1.0);

    const auto ab = Expression::compile("abs(x2)", {2, 0});
    const std::vector<double> origin{0.3, 0.0}, e1{1.0, 0.0}, e2{0.0, 1.0};
    ab.directional(origin, {}, e1, kink);
    EXPECT_FALSE(kink);  // constant along e1
    ab.directional(origin, {}, e2, kink);
    EXPECT_TRUE(kink);
}
