/*
 * expr.hpp
 *
 * Arithmetic expressions over state (x1..xn), input (u1..um) and disturbance
 * (w1..wp) variables. Grammar:
 *
 *   expr    ::= term { ("+" | "-") term }
 *   term    ::= unary { ("*" | "/") unary }
 *   unary   ::= "-" unary | primary
 *   primary ::= number | var | "(" expr ")" | fn "(" expr ")" | "pow" "(" expr "," int ")"
 *   fn      ::= "sin" | "cos" | "tanh" | "exp"
 */

#ifndef STOCHABS_EXPR_HPP_
#define STOCHABS_EXPR_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stochabs {

/// Error with a 1-based source position.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &msg, int line, int column)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

private:
  int line_;
  int column_;
};

class EvalError : public std::runtime_error {
public:
  EvalError(const std::string &msg, std::string subexpr)
      : std::runtime_error(msg + " in '" + subexpr + "'"), subexpr_(std::move(subexpr)) {}
  const std::string &subexpression() const { return subexpr_; }

private:
  std::string subexpr_;
};

enum class VarKind { State, Input, Disturbance };
enum class ExprOp { Num, Var, Neg, Add, Sub, Mul, Div, Sin, Cos, Tanh, Exp, Pow };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op;
  double value = 0.0;              // Num
  VarKind kind = VarKind::State;   // Var
  int index = 0;                   // Var (0-based); Pow exponent
  Expr lhs;                        // unary operand / left
  Expr rhs;                        // right
};

namespace expr {

inline Expr num(double v) { return std::make_shared<const ExprNode>(ExprNode{ExprOp::Num, v, VarKind::State, 0, nullptr, nullptr}); }
inline Expr var(VarKind k, int idx0) {
  return std::make_shared<const ExprNode>(ExprNode{ExprOp::Var, 0.0, k, idx0, nullptr, nullptr});
}
inline Expr unary(ExprOp op, Expr a) {
  return std::make_shared<const ExprNode>(ExprNode{op, 0.0, VarKind::State, 0, std::move(a), nullptr});
}
inline Expr binary(ExprOp op, Expr a, Expr b) {
  return std::make_shared<const ExprNode>(ExprNode{op, 0.0, VarKind::State, 0, std::move(a), std::move(b)});
}
inline Expr pow(Expr a, int k) {
  return std::make_shared<const ExprNode>(ExprNode{ExprOp::Pow, 0.0, VarKind::State, k, std::move(a), nullptr});
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char *fn_name(ExprOp op) {
  switch (op) {
  case ExprOp::Sin: return "sin";
  case ExprOp::Cos: return "cos";
  case ExprOp::Tanh: return "tanh";
  case ExprOp::Exp: return "exp";
  default: return "?";
  }
}

/// Fully parenthesised text that parses back to the same tree.
inline std::string print(const Expr &e) {
  switch (e->op) {
  case ExprOp::Num:
    return e->value < 0.0 || std::signbit(e->value) ? "(-" + format_real(-e->value) + ")" : format_real(e->value);
  case ExprOp::Var: {
    char c = e->kind == VarKind::State ? 'x' : e->kind == VarKind::Input ? 'u' : 'w';
    return std::string(1, c) + std::to_string(e->index + 1);
  }
  case ExprOp::Neg: return "(-" + print(e->lhs) + ")";
  case ExprOp::Add: return "(" + print(e->lhs) + " + " + print(e->rhs) + ")";
  case ExprOp::Sub: return "(" + print(e->lhs) + " - " + print(e->rhs) + ")";
  case ExprOp::Mul: return "(" + print(e->lhs) + " * " + print(e->rhs) + ")";
  case ExprOp::Div: return "(" + print(e->lhs) + " / " + print(e->rhs) + ")";
  case ExprOp::Pow: return "pow(" + print(e->lhs) + ", " + std::to_string(e->index) + ")";
  default: return std::string(fn_name(e->op)) + "(" + print(e->lhs) + ")";
  }
}

inline bool equal(const Expr &a, const Expr &b) {
  if (a->op != b->op) return false;
  switch (a->op) {
  case ExprOp::Num: return a->value == b->value;
  case ExprOp::Var: return a->kind == b->kind && a->index == b->index;
  case ExprOp::Pow: return a->index == b->index && equal(a->lhs, b->lhs);
  case ExprOp::Add:
  case ExprOp::Sub:
  case ExprOp::Mul:
  case ExprOp::Div: return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  default: return equal(a->lhs, b->lhs);
  }
}

inline bool uses_kind(const Expr &e, VarKind k) {
  if (e->op == ExprOp::Var) return e->kind == k;
  if (e->op == ExprOp::Num) return false;
  return uses_kind(e->lhs, k) || (e->rhs && uses_kind(e->rhs, k));
}

} // namespace expr

/// Declared variable counts; indices are validated against these.
struct VarDims {
  int n = 0;
  int m = 0;
  int p = 0;
};

/**
 * @brief Recursive-descent parser for one expression.
 *
 * `line` and `col0` locate the text in its source file so errors carry
 * absolute positions.
 */
class ExprParser {
public:
  ExprParser(std::string_view text, VarDims dims, int line = 1, int col0 = 1)
      : s_(text), dims_(dims), line_(line), col0_(col0) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (at_ < s_.size()) fail("unexpected '" + std::string(1, s_[at_]) + "'");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string &msg) const { throw ParseError(msg, line_, col0_ + int(at_)); }
  [[noreturn]] void fail_at(const std::string &msg, std::size_t pos) const {
    throw ParseError(msg, line_, col0_ + int(pos));
  }

  void skip_ws() {
    while (at_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[at_]))) ++at_;
  }
  bool accept(char c) {
    skip_ws();
    if (at_ < s_.size() && s_[at_] == c) {
      ++at_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (at_ >= s_.size()) fail(std::string("expected '") + c + "' but reached end of expression");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      if (accept('+'))
        lhs = expr::binary(ExprOp::Add, lhs, parse_product());
      else if (accept('-'))
        lhs = expr::binary(ExprOp::Sub, lhs, parse_product());
      else
        return lhs;
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*'))
        lhs = expr::binary(ExprOp::Mul, lhs, parse_unary());
      else if (accept('/'))
        lhs = expr::binary(ExprOp::Div, lhs, parse_unary());
      else
        return lhs;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return expr::unary(ExprOp::Neg, parse_unary());
    return parse_primary();
  }

  Expr parse_primary() {
    skip_ws();
    if (at_ >= s_.size()) fail("unexpected end of expression");
    char c = s_[at_];
    if (c == '(') {
      ++at_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr parse_number() {
    std::size_t start = at_;
    while (at_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[at_]))) ++at_;
    if (at_ < s_.size() && s_[at_] == '.') {
      ++at_;
      while (at_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[at_]))) ++at_;
    }
    if (at_ < s_.size() && (s_[at_] == 'e' || s_[at_] == 'E')) {
      std::size_t save = at_++;
      if (at_ < s_.size() && (s_[at_] == '+' || s_[at_] == '-')) ++at_;
      if (at_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[at_]))) {
        while (at_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[at_]))) ++at_;
      } else {
        at_ = save;
      }
    }
    std::string tok(s_.substr(start, at_ - start));
    if (tok == ".") fail_at("malformed number", start);
    return expr::num(std::stod(tok));
  }

  Expr parse_identifier() {
    std::size_t start = at_;
    while (at_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[at_]))) ++at_;
    std::string id(s_.substr(start, at_ - start));
    static const std::pair<const char *, ExprOp> fns[] = {
        {"sin", ExprOp::Sin}, {"cos", ExprOp::Cos}, {"tanh", ExprOp::Tanh}, {"exp", ExprOp::Exp}};
    for (auto [name, op] : fns) {
      if (id == name) {
        expect('(');
        Expr a = parse_sum();
        expect(')');
        return expr::unary(op, a);
      }
    }
    if (id == "pow") {
      expect('(');
      Expr a = parse_sum();
      expect(',');
      skip_ws();
      std::size_t ks = at_;
      bool neg = false;
      if (at_ < s_.size() && s_[at_] == '-') {
        neg = true;
        ++at_;
      }
      std::size_t ds = at_;
      while (at_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[at_]))) ++at_;
      if (ds == at_) fail_at("pow exponent must be an integer literal", ks);
      int k = std::stoi(std::string(s_.substr(ds, at_ - ds)));
      expect(')');
      return expr::pow(a, neg ? -k : k);
    }
    if (id.size() >= 2 && (id[0] == 'x' || id[0] == 'u' || id[0] == 'w')) {
      bool digits = true;
      for (std::size_t i = 1; i < id.size(); ++i) digits = digits && std::isdigit(static_cast<unsigned char>(id[i]));
      if (digits) {
        int idx = std::stoi(id.substr(1));
        VarKind kind = id[0] == 'x' ? VarKind::State : id[0] == 'u' ? VarKind::Input : VarKind::Disturbance;
        int limit = kind == VarKind::State ? dims_.n : kind == VarKind::Input ? dims_.m : dims_.p;
        if (idx < 1 || idx > limit) fail_at("variable index out of range: " + id, start);
        return expr::var(kind, idx - 1);
      }
    }
    fail_at("unknown identifier '" + id + "'", start);
  }

  std::string_view s_;
  VarDims dims_;
  int line_;
  int col0_;
  std::size_t at_ = 0;
};

inline Expr parse_expr(std::string_view text, VarDims dims, int line = 1, int col0 = 1) {
  return ExprParser(text, dims, line, col0).parse();
}

/// Tree-walking evaluation; division by zero throws EvalError.
inline double eval_expr(const Expr &e, std::span<const double> x, std::span<const double> u,
                        std::span<const double> w) {
  switch (e->op) {
  case ExprOp::Num: return e->value;
  case ExprOp::Var: {
    auto vec = e->kind == VarKind::State ? x : e->kind == VarKind::Input ? u : w;
    if (std::size_t(e->index) >= vec.size()) throw EvalError("variable vector too short", expr::print(e));
    return vec[e->index];
  }
  case ExprOp::Neg: return -eval_expr(e->lhs, x, u, w);
  case ExprOp::Add: return eval_expr(e->lhs, x, u, w) + eval_expr(e->rhs, x, u, w);
  case ExprOp::Sub: return eval_expr(e->lhs, x, u, w) - eval_expr(e->rhs, x, u, w);
  case ExprOp::Mul: return eval_expr(e->lhs, x, u, w) * eval_expr(e->rhs, x, u, w);
  case ExprOp::Div: {
    double a = eval_expr(e->lhs, x, u, w);
    double b = eval_expr(e->rhs, x, u, w);
    if (b == 0.0) throw EvalError("division by zero", expr::print(e));
    return a / b;
  }
  case ExprOp::Sin: return std::sin(eval_expr(e->lhs, x, u, w));
  case ExprOp::Cos: return std::cos(eval_expr(e->lhs, x, u, w));
  case ExprOp::Tanh: return std::tanh(eval_expr(e->lhs, x, u, w));
  case ExprOp::Exp: return std::exp(eval_expr(e->lhs, x, u, w));
  case ExprOp::Pow: {
    double b = eval_expr(e->lhs, x, u, w);
    if (e->index < 0 && b == 0.0) throw EvalError("division by zero", expr::print(e));
    double r = 1.0;
    for (int i = 0; i < std::abs(e->index); ++i) r *= b;
    return e->index < 0 ? 1.0 / r : r;
  }
  }
  return 0.0;
}

/**
 * @brief Postfix program compiled from an Expr for fast repeated evaluation.
 *
 * Produces the same floating-point results as eval_expr (identical
 * operation order).
 */
class CompiledExpr {
public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expr &e) : source_(e) {
    emit(e);
    int depth = 0;
    for (const auto &ins : code_) {
      depth += stack_effect(ins.op);
      max_depth_ = std::max(max_depth_, depth);
    }
  }

  double operator()(std::span<const double> x, std::span<const double> u, std::span<const double> w) const {
    double stackbuf[64] = {};
    std::vector<double> heap;
    double *st = stackbuf;
    if (max_depth_ > 64) {
      heap.resize(max_depth_);
      st = heap.data();
    }
    int sp = 0;
    for (const auto &ins : code_) {
      switch (ins.op) {
      case ExprOp::Num: st[sp++] = ins.value; break;
      case ExprOp::Var: {
        auto vec = ins.kind == VarKind::State ? x : ins.kind == VarKind::Input ? u : w;
        st[sp++] = vec[ins.index];
        break;
      }
      case ExprOp::Neg: st[sp - 1] = -st[sp - 1]; break;
      case ExprOp::Add: --sp; st[sp - 1] = st[sp - 1] + st[sp]; break;
      case ExprOp::Sub: --sp; st[sp - 1] = st[sp - 1] - st[sp]; break;
      case ExprOp::Mul: --sp; st[sp - 1] = st[sp - 1] * st[sp]; break;
      case ExprOp::Div:
        --sp;
        if (st[sp] == 0.0) throw EvalError("division by zero", expr::print(ins.node));
        st[sp - 1] = st[sp - 1] / st[sp];
        break;
      case ExprOp::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
      case ExprOp::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
      case ExprOp::Tanh: st[sp - 1] = std::tanh(st[sp - 1]); break;
      case ExprOp::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
      case ExprOp::Pow: {
        double b = st[sp - 1];
        if (ins.index < 0 && b == 0.0) throw EvalError("division by zero", expr::print(ins.node));
        double r = 1.0;
        for (int i = 0; i < std::abs(ins.index); ++i) r *= b;
        st[sp - 1] = ins.index < 0 ? 1.0 / r : r;
        break;
      }
      }
    }
    return st[0];
  }

  const Expr &source() const { return source_; }

private:
  struct Instr {
    ExprOp op;
    double value;
    VarKind kind;
    int index;
    Expr node; // kept for error messages
  };

  static int stack_effect(ExprOp op) {
    switch (op) {
    case ExprOp::Num:
    case ExprOp::Var: return 1;
    case ExprOp::Add:
    case ExprOp::Sub:
    case ExprOp::Mul:
    case ExprOp::Div: return -1;
    default: return 0;
    }
  }

  void emit(const Expr &e) {
    if (e->lhs) emit(e->lhs);
    if (e->rhs) emit(e->rhs);
    Expr keep = (e->op == ExprOp::Div || e->op == ExprOp::Pow) ? e : nullptr;
    code_.push_back(Instr{e->op, e->value, e->kind, e->index, keep});
  }

  Expr source_;
  std::vector<Instr> code_;
  int max_depth_ = 0;
};

/// c0 + sum_j coef[j] * var_j over the concatenated (x, u, w) vector.
struct AffineForm {
  double constant = 0.0;
  std::vector<double> coef;
};

/**
 * Symbolic affine extraction. Returns nullopt when the expression is not
 * affine in (x, u, w), e.g. a product of two variables or a function of a
 * variable.
 */
inline std::optional<AffineForm> affine_form(const Expr &e, VarDims d) {
  const std::size_t nv = std::size_t(d.n + d.m + d.p);
  auto is_const = [](const AffineForm &a) {
    for (double c : a.coef)
      if (c != 0.0) return false;
    return true;
  };
  auto scale = [](AffineForm a, double s) {
    a.constant *= s;
    for (double &c : a.coef) c *= s;
    return a;
  };
  switch (e->op) {
  case ExprOp::Num: return AffineForm{e->value, std::vector<double>(nv, 0.0)};
  case ExprOp::Var: {
    AffineForm a{0.0, std::vector<double>(nv, 0.0)};
    int off = e->kind == VarKind::State ? 0 : e->kind == VarKind::Input ? d.n : d.n + d.m;
    a.coef[std::size_t(off + e->index)] = 1.0;
    return a;
  }
  case ExprOp::Neg: {
    auto a = affine_form(e->lhs, d);
    if (!a) return std::nullopt;
    return scale(*a, -1.0);
  }
  case ExprOp::Add:
  case ExprOp::Sub: {
    auto a = affine_form(e->lhs, d);
    auto b = affine_form(e->rhs, d);
    if (!a || !b) return std::nullopt;
    double s = e->op == ExprOp::Add ? 1.0 : -1.0;
    a->constant += s * b->constant;
    for (std::size_t j = 0; j < nv; ++j) a->coef[j] += s * b->coef[j];
    return a;
  }
  case ExprOp::Mul: {
    auto a = affine_form(e->lhs, d);
    auto b = affine_form(e->rhs, d);
    if (!a || !b) return std::nullopt;
    if (is_const(*a)) return scale(*b, a->constant);
    if (is_const(*b)) return scale(*a, b->constant);
    return std::nullopt;
  }
  case ExprOp::Div: {
    auto a = affine_form(e->lhs, d);
    auto b = affine_form(e->rhs, d);
    if (!a || !b || !is_const(*b) || b->constant == 0.0) return std::nullopt;
    return scale(*a, 1.0 / b->constant);
  }
  case ExprOp::Pow: {
    auto a = affine_form(e->lhs, d);
    if (!a) return std::nullopt;
    if (e->index == 1) return a;
    if (e->index == 0) return AffineForm{1.0, std::vector<double>(nv, 0.0)};
    if (!is_const(*a)) return std::nullopt;
    return AffineForm{eval_expr(e, {}, {}, {}), std::vector<double>(nv, 0.0)};
  }
  default: {
    auto a = affine_form(e->lhs, d);
    if (!a || !is_const(*a)) return std::nullopt;
    double v = eval_expr(expr::unary(e->op, expr::num(a->constant)), {}, {}, {});
    return AffineForm{v, std::vector<double>(nv, 0.0)};
  }
  }
}

} // namespace stochabs

#endif /* STOCHABS_EXPR_HPP_ */
