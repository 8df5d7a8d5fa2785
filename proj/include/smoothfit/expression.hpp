#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "smoothfit/errors.hpp"

namespace smoothfit::problems {

/// Value plus directional derivative. `kink` is raised when the derivative
/// is ambiguous (abs/pos at zero, max/min ties with different slopes).
struct Dual {
    double v = 0.0;
    double d = 0.0;
};

/// Variable layout of an expression: states x1..xn and controls a1..ad.
/// With n == 1 the alias `x` names x1; with d == 1 `a` names a1.
struct VariableLayout {
    std::size_t n = 1;
    std::size_t d = 0;
};

class Expression {
public:
    enum class Op : std::uint8_t { constant, state, control, add, sub, mul, div, pow, neg, exp, log, abs, max, min, pos };

    struct Instr {
        Op op;
        double value = 0.0;
        std::uint32_t index = 0;
    };

    static constexpr std::size_t kMaxStack = 64;

    Expression() : text_("0"), program_{Instr{Op::constant, 0.0, 0}}, stack_depth_(1) {}

    static Expression constant(double c) {
        Expression e;
        e.text_ = format_number(c);
        e.program_[0].value = c;
        return e;
    }

    /// Parses `text` and compiles it to a postfix program. Named constants are
    /// substituted and folded at compile time.
    static Expression compile(const std::string& text, VariableLayout layout,
                              const std::map<std::string, double>& constants = {});

    const std::string& text() const noexcept { return text_; }
    std::span<const Instr> program() const noexcept { return program_; }

    bool is_constant() const noexcept { return program_.size() == 1 && program_[0].op == Op::constant; }
    double constant_value() const { return program_[0].value; }
    bool is_zero() const noexcept { return is_constant() && program_[0].value == 0.0; }

    bool uses_control() const noexcept {
        for (const auto& in : program_)
            if (in.op == Op::control) return true;
        return false;
    }

    double operator()(std::span<const double> x, std::span<const double> a = {}) const {
        bool kink = false;
        return run<double>(x, a, {}, kink);
    }

    /// Value and derivative along direction `dir` in state space.
    Dual directional(std::span<const double> x, std::span<const double> a, std::span<const double> dir,
                     bool& kink) const {
        kink = false;
        return run<Dual>(x, a, dir, kink);
    }

private:
    std::string text_;
    std::vector<Instr> program_;
    std::size_t stack_depth_ = 0;

    static std::string format_number(double c) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", c);
        return buf;
    }

    static double checked(double r, const char* what) {
        if (!std::isfinite(r)) throw DomainError(std::string("expression: non-finite result in ") + what);
        return r;
    }

    // double arithmetic
    static double add(double a, double b, bool&) { return a + b; }
    static double sub(double a, double b, bool&) { return a - b; }
    static double mul(double a, double b, bool&) { return a * b; }
    static double div(double a, double b, bool&) {
        if (b == 0.0) throw DomainError("expression: division by zero");
        return a / b;
    }
    static double powr(double a, double b, bool&) {
        if (a < 0.0 && b != std::floor(b)) throw DomainError("expression: negative base with non-integer exponent");
        if (a == 0.0 && b < 0.0) throw DomainError("expression: zero base with negative exponent");
        return checked(std::pow(a, b), "pow");
    }
    static double neg(double a, bool&) { return -a; }
    static double expf(double a, bool&) { return checked(std::exp(a), "exp"); }
    static double logf(double a, bool&) {
        if (!(a > 0.0)) throw DomainError("expression: log of non-positive argument");
        return std::log(a);
    }
    static double absf(double a, bool&) { return std::abs(a); }
    static double maxf(double a, double b, bool&) { return a >= b ? a : b; }
    static double minf(double a, double b, bool&) { return a <= b ? a : b; }
    static double posf(double a, bool&) { return a > 0.0 ? a : 0.0; }

    // dual arithmetic
    static Dual add(Dual a, Dual b, bool&) { return {a.v + b.v, a.d + b.d}; }
    static Dual sub(Dual a, Dual b, bool&) { return {a.v - b.v, a.d - b.d}; }
    static Dual mul(Dual a, Dual b, bool&) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    static Dual div(Dual a, Dual b, bool& k) {
        const double q = div(a.v, b.v, k);
        return {q, (a.d - q * b.d) / b.v};
    }
    static Dual powr(Dual a, Dual b, bool& k) {
        const double r = powr(a.v, b.v, k);
        double d = 0.0;
        if (b.d != 0.0) {
            if (!(a.v > 0.0)) throw DomainError("expression: variable exponent needs a positive base");
            d += r * std::log(a.v) * b.d;
        }
        if (a.d != 0.0) {
            if (a.v == 0.0) {
                if (b.v < 1.0) throw DomainError("expression: pow not differentiable at zero base");
                d += b.v == 1.0 ? a.d : 0.0;
            } else {
                d += b.v * std::pow(a.v, b.v - 1.0) * a.d;
            }
        }
        return {r, checked(d, "pow derivative")};
    }
    static Dual neg(Dual a, bool&) { return {-a.v, -a.d}; }
    static Dual expf(Dual a, bool& k) {
        const double e = expf(a.v, k);
        return {e, e * a.d};
    }
    static Dual logf(Dual a, bool& k) { return {logf(a.v, k), a.d / a.v}; }
    static Dual absf(Dual a, bool& k) {
        if (a.v == 0.0) {
            if (a.d != 0.0) k = true;
            return {0.0, std::abs(a.d)};
        }
        return a.v > 0.0 ? a : Dual{-a.v, -a.d};
    }
    static Dual maxf(Dual a, Dual b, bool& k) {
        if (a.v == b.v && a.d != b.d) k = true;
        return a.v > b.v || (a.v == b.v && a.d >= b.d) ? a : b;
    }
    static Dual minf(Dual a, Dual b, bool& k) {
        if (a.v == b.v && a.d != b.d) k = true;
        return a.v < b.v || (a.v == b.v && a.d <= b.d) ? a : b;
    }
    static Dual posf(Dual a, bool& k) {
        if (a.v == 0.0) {
            if (a.d != 0.0) k = true;
            return {0.0, std::max(a.d, 0.0)};
        }
        return a.v > 0.0 ? a : Dual{};
    }

    template <typename T>
    T run(std::span<const double> x, std::span<const double> a, std::span<const double> dir, bool& kink) const {
        T stack[kMaxStack];
        std::size_t top = 0;
        for (const Instr& in : program_) {
            switch (in.op) {
                case Op::constant:
                    if constexpr (std::is_same_v<T, Dual>) stack[top++] = Dual{in.value, 0.0};
                    else stack[top++] = in.value;
                    break;
                case Op::state:
                    if (in.index >= x.size()) throw InvalidArgument("expression: state vector too short");
                    if constexpr (std::is_same_v<T, Dual>)
                        stack[top++] = Dual{x[in.index], in.index < dir.size() ? dir[in.index] : 0.0};
                    else stack[top++] = x[in.index];
                    break;
                case Op::control:
                    if (in.index >= a.size()) throw InvalidArgument("expression: control vector too short");
                    if constexpr (std::is_same_v<T, Dual>) stack[top++] = Dual{a[in.index], 0.0};
                    else stack[top++] = a[in.index];
                    break;
                case Op::neg: stack[top - 1] = neg(stack[top - 1], kink); break;
                case Op::exp: stack[top - 1] = expf(stack[top - 1], kink); break;
                case Op::log: stack[top - 1] = logf(stack[top - 1], kink); break;
                case Op::abs: stack[top - 1] = absf(stack[top - 1], kink); break;
                case Op::pos: stack[top - 1] = posf(stack[top - 1], kink); break;
                default: {
                    const T rhs = stack[--top];
                    T& lhs = stack[top - 1];
                    switch (in.op) {
                        case Op::add: lhs = add(lhs, rhs, kink); break;
                        case Op::sub: lhs = sub(lhs, rhs, kink); break;
                        case Op::mul: lhs = mul(lhs, rhs, kink); break;
                        case Op::div: lhs = div(lhs, rhs, kink); break;
                        case Op::pow: lhs = powr(lhs, rhs, kink); break;
                        case Op::max: lhs = maxf(lhs, rhs, kink); break;
                        case Op::min: lhs = minf(lhs, rhs, kink); break;
                        default: break;
                    }
                }
            }
        }
        if constexpr (std::is_same_v<T, Dual>) {
            checked(stack[0].v, text_.c_str());
            checked(stack[0].d, text_.c_str());
        } else {
            checked(stack[0], text_.c_str());
        }
        return stack[0];
    }

    friend class ExpressionParser;
};

/// Recursive-descent parser producing postfix code.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('-' | '+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
class ExpressionParser {
public:
    ExpressionParser(const std::string& text, VariableLayout layout, const std::map<std::string, double>& constants)
        : s_(text), layout_(layout), constants_(constants) {}

    std::vector<Expression::Instr> parse() {
        expr();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return std::move(code_);
    }

private:
    using Op = Expression::Op;
    using Instr = Expression::Instr;

    const std::string& s_;
    VariableLayout layout_;
    const std::map<std::string, double>& constants_;
    std::size_t pos_ = 0;
    std::vector<Instr> code_;

    [[noreturn]] void fail(const std::string& msg) const {
        throw InvalidArgument("expression \"" + s_ + "\" at column " + std::to_string(pos_ + 1) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    // Emits op, folding when all operands are constants.
    void emit(Op op, std::size_t arity) {
        const std::size_t k = code_.size();
        bool foldable = k >= arity;
        for (std::size_t i = 0; foldable && i < arity; ++i) foldable = code_[k - 1 - i].op == Op::constant;
        code_.push_back(Instr{op, 0.0, 0});
        if (!foldable) return;
        Expression e;
        e.text_ = s_;
        e.program_.assign(code_.end() - static_cast<std::ptrdiff_t>(arity + 1), code_.end());
        double v;
        try {
            v = e(std::span<const double>{});
        } catch (const DomainError& err) {
            fail(err.what());
        }
        code_.resize(k - arity);
        code_.push_back(Instr{Op::constant, v, 0});
    }

    void expr() {
        term();
        for (;;) {
            if (accept('+')) {
                term();
                emit(Op::add, 2);
            } else if (accept('-')) {
                term();
                emit(Op::sub, 2);
            } else {
                return;
            }
        }
    }

    void term() {
        unary();
        for (;;) {
            if (accept('*')) {
                unary();
                emit(Op::mul, 2);
            } else if (accept('/')) {
                unary();
                emit(Op::div, 2);
            } else {
                return;
            }
        }
    }

    void unary() {
        if (accept('-')) {
            unary();
            emit(Op::neg, 1);
        } else if (accept('+')) {
            unary();
        } else {
            power();
        }
    }

    void power() {
        primary();
        if (accept('^')) {
            unary();
            emit(Op::pow, 2);
        }
    }

    void primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (accept('(')) {
            expr();
            expect(')');
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            name();
            return;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    void number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        code_.push_back(Instr{Op::constant, v, 0});
    }

    void name() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        const std::string id = s_.substr(start, pos_ - start);

        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            call(id);
            return;
        }
        if (auto it = constants_.find(id); it != constants_.end()) {
            code_.push_back(Instr{Op::constant, it->second, 0});
            return;
        }
        if (id == "x" && layout_.n == 1) {
            code_.push_back(Instr{Op::state, 0.0, 0});
            return;
        }
        if (id == "a" && layout_.d == 1) {
            code_.push_back(Instr{Op::control, 0.0, 0});
            return;
        }
        if (id.size() >= 2 && (id[0] == 'x' || id[0] == 'a')) {
            bool digits = id[1] != '0';
            for (std::size_t i = 1; i < id.size(); ++i) digits = digits && std::isdigit(static_cast<unsigned char>(id[i]));
            if (digits) {
                const std::size_t k = std::stoul(id.substr(1));
                const std::size_t limit = id[0] == 'x' ? layout_.n : layout_.d;
                if (k == 0 || k > limit) fail("variable " + id + " out of range");
                code_.push_back(Instr{id[0] == 'x' ? Op::state : Op::control, 0.0, static_cast<std::uint32_t>(k - 1)});
                return;
            }
        }
        fail("unknown name '" + id + "'");
    }

    void call(const std::string& fn) {
        expect('(');
        std::size_t argc = 0;
        if (!accept(')')) {
            do {
                expr();
                ++argc;
            } while (accept(','));
            expect(')');
        }
        struct Sig {
            const char* name;
            Op op;
            std::size_t arity;
        };
        static constexpr Sig sigs[] = {{"exp", Op::exp, 1}, {"log", Op::log, 1}, {"abs", Op::abs, 1},
                                       {"pos", Op::pos, 1}, {"max", Op::max, 2}, {"min", Op::min, 2},
                                       {"pow", Op::pow, 2}};
        for (const auto& s : sigs) {
            if (fn == s.name) {
                if (argc != s.arity)
                    fail(fn + " takes " + std::to_string(s.arity) + " argument(s), got " + std::to_string(argc));
                emit(s.op, s.arity);
                return;
            }
        }
        fail("unknown function '" + fn + "'");
    }
};

inline Expression Expression::compile(const std::string& text, VariableLayout layout,
                                      const std::map<std::string, double>& constants) {
    Expression e{};
    e.text_ = text;
    e.program_ = ExpressionParser(text, layout, constants).parse();
    std::size_t depth = 0, peak = 0;
    for (const auto& in : e.program_) {
        switch (in.op) {
            case Op::constant:
            case Op::state:
            case Op::control: ++depth; break;
            case Op::neg:
            case Op::exp:
            case Op::log:
            case Op::abs:
            case Op::pos: break;
            default: --depth;
        }
        peak = std::max(peak, depth);
    }
    if (peak > kMaxStack) throw InvalidArgument("expression \"" + text + "\": nesting deeper than 64");
    e.stack_depth_ = peak;
    return e;
}

}  // namespace smoothfit::problems
