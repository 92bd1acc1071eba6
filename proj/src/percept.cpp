#include "viewfield/percept.hpp"

#include "viewfield/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace viewfield {

using Kind = Expr::Kind;

ExprPtr Expr::number(double v) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::number;
  e->value = v;
  return e;
}

ExprPtr Expr::ref(int component, std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::component;
  e->component = component;
  e->name = std::move(name);
  return e;
}

ExprPtr Expr::unary(ExprPtr operand) {
  auto e = std::make_shared<Expr>();
  e->kind = Kind::negate;
  e->lhs = std::move(operand);
  return e;
}

ExprPtr Expr::binary(Kind kind, ExprPtr lhs, ExprPtr rhs) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->lhs = std::move(lhs);
  e->rhs = std::move(rhs);
  return e;
}

bool equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Kind::number:
      return a.value == b.value;
    case Kind::component:
      return a.component == b.component;
    case Kind::negate:
      return equal(*a.lhs, *b.lhs);
    default:
      return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
  }
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>& names) : s_(text), names_(names) {}

  ExprPtr parse() {
    skip();
    if (pos_ == s_.size()) fail("empty expression");
    ExprPtr e = expr();
    skip();
    if (pos_ != s_.size()) {
      if (s_[pos_] == ')') fail("unbalanced ')'");
      fail("unexpected trailing input");
    }
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { fail_at(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) { throw ParseError("expression: " + msg, at); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExprPtr expr() {
    ExprPtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(Kind::add, lhs, term());
      } else if (accept('-')) {
        lhs = Expr::binary(Kind::subtract, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr term() {
    ExprPtr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(Kind::multiply, lhs, unary());
      } else if (accept('/')) {
        lhs = Expr::binary(Kind::divide, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr unary() {
    if (accept('-')) return Expr::unary(unary());
    return primary();
  }

  ExprPtr primary() {
    skip();
    if (pos_ == s_.size()) fail("missing operand at end of input");
    const char c = s_[pos_];
    if (c == '(') {
      const std::size_t open = pos_++;
      ExprPtr e = expr();
      if (!accept(')')) {
        skip();
        if (pos_ == s_.size()) fail_at("unbalanced '('", open);
        fail("expected ')'");
      }
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("missing operand before '") + c + "'");
  }

  ExprPtr number() {
    const std::size_t start = pos_;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v, std::chars_format::general);
    if (ec != std::errc()) fail("malformed number");
    pos_ = ptr - s_.data();
    if (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      fail_at("malformed number", start);
    }
    return Expr::number(v);
  }

  ExprPtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    const std::string_view id = s_.substr(start, pos_ - start);
    auto lookup = [&](std::string_view n) -> int {
      auto it = std::find(names_.begin(), names_.end(), n);
      return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
    };
    int idx = lookup(id);
    if (idx < 0 && id.starts_with("m_")) idx = lookup(id.substr(2));
    if (idx < 0) fail_at("unknown component '" + std::string(id) + "'", start);
    return Expr::ref(idx, names_[idx]);
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

bool is_number(const ExprPtr& e, double v) { return e->kind == Kind::number && e->value == v; }

ExprPtr neg(ExprPtr a) {
  if (a->kind == Kind::number) return Expr::number(-a->value);
  if (a->kind == Kind::negate) return a->lhs;
  return Expr::unary(std::move(a));
}

ExprPtr add(ExprPtr a, ExprPtr b) {
  if (a->kind == Kind::number && b->kind == Kind::number) return Expr::number(a->value + b->value);
  if (is_number(a, 0)) return b;
  if (is_number(b, 0)) return a;
  return Expr::binary(Kind::add, std::move(a), std::move(b));
}

ExprPtr sub(ExprPtr a, ExprPtr b) {
  if (a->kind == Kind::number && b->kind == Kind::number) return Expr::number(a->value - b->value);
  if (is_number(b, 0)) return a;
  if (is_number(a, 0)) return neg(std::move(b));
  return Expr::binary(Kind::subtract, std::move(a), std::move(b));
}

ExprPtr mul(ExprPtr a, ExprPtr b) {
  if (a->kind == Kind::number && b->kind == Kind::number) return Expr::number(a->value * b->value);
  if (is_number(a, 0) || is_number(b, 0)) return Expr::number(0);
  if (is_number(a, 1)) return b;
  if (is_number(b, 1)) return a;
  return Expr::binary(Kind::multiply, std::move(a), std::move(b));
}

ExprPtr div(ExprPtr a, ExprPtr b) {
  if (is_number(a, 0)) return Expr::number(0);
  if (is_number(b, 1)) return a;
  return Expr::binary(Kind::divide, std::move(a), std::move(b));
}

int precedence(const Expr& e) {
  switch (e.kind) {
    case Kind::add:
    case Kind::subtract:
      return 1;
    case Kind::multiply:
    case Kind::divide:
      return 2;
    case Kind::negate:
      return 3;
    case Kind::number:
      return e.value < 0 ? 3 : 4;
    default:
      return 4;
  }
}

void print(const Expr& e, std::string& out) {
  auto child = [&](const Expr& c, bool parens) {
    if (parens) out += '(';
    print(c, out);
    if (parens) out += ')';
  };
  switch (e.kind) {
    case Kind::number: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", e.value);
      out += buf;
      return;
    }
    case Kind::component:
      out += e.name;
      return;
    case Kind::negate:
      out += '-';
      child(*e.lhs, precedence(*e.lhs) < 3);
      return;
    default: {
      const int p = precedence(e);
      child(*e.lhs, precedence(*e.lhs) < p);
      switch (e.kind) {
        case Kind::add: out += " + "; break;
        case Kind::subtract: out += " - "; break;
        case Kind::multiply: out += " * "; break;
        default: out += " / "; break;
      }
      child(*e.rhs, precedence(*e.rhs) <= p);
    }
  }
}

}  // namespace

ExprPtr parse_expression(std::string_view text, const std::vector<std::string>& names) {
  return Parser(text, names).parse();
}

double guarded(double d) { return std::abs(d) < kDivisionFloor ? std::copysign(kDivisionFloor, d) : d; }

double eval(const Expr& e, std::span<const double> m) {
  switch (e.kind) {
    case Kind::number:
      return e.value;
    case Kind::component:
      if (e.component < 0 || static_cast<std::size_t>(e.component) >= m.size()) {
        throw UserError("expression: component '" + e.name + "' outside the distribution");
      }
      return m[e.component];
    case Kind::negate:
      return -eval(*e.lhs, m);
    case Kind::add:
      return eval(*e.lhs, m) + eval(*e.rhs, m);
    case Kind::subtract:
      return eval(*e.lhs, m) - eval(*e.rhs, m);
    case Kind::multiply:
      return eval(*e.lhs, m) * eval(*e.rhs, m);
    case Kind::divide:
      return eval(*e.lhs, m) / guarded(eval(*e.rhs, m));
  }
  return 0;
}

ExprPtr derivative(const ExprPtr& e, int c) {
  switch (e->kind) {
    case Kind::number:
      return Expr::number(0);
    case Kind::component:
      return Expr::number(e->component == c ? 1 : 0);
    case Kind::negate:
      return neg(derivative(e->lhs, c));
    case Kind::add:
      return add(derivative(e->lhs, c), derivative(e->rhs, c));
    case Kind::subtract:
      return sub(derivative(e->lhs, c), derivative(e->rhs, c));
    case Kind::multiply:
      return add(mul(derivative(e->lhs, c), e->rhs), mul(e->lhs, derivative(e->rhs, c)));
    case Kind::divide: {
      // (a' - (a / b) b') / b, so the guarded denominator carries through.
      const ExprPtr da = derivative(e->lhs, c), db = derivative(e->rhs, c);
      return div(sub(da, mul(div(e->lhs, e->rhs), db)), e->rhs);
    }
  }
  return Expr::number(0);
}

std::string to_string(const Expr& e) {
  std::string out;
  print(e, out);
  return out;
}

int reference_count(const Expr& e) {
  switch (e.kind) {
    case Kind::number:
      return 0;
    case Kind::component:
      return 1;
    case Kind::negate:
      return reference_count(*e.lhs);
    default:
      return reference_count(*e.lhs) + reference_count(*e.rhs);
  }
}

PerceptionMetric::PerceptionMetric(std::string name, std::string source, const std::vector<std::string>& components)
    : name_(std::move(name)), source_(std::move(source)), expr_(parse_expression(source_, components)) {
  for (std::size_t c = 0; c < components.size(); ++c) derivatives_.push_back(derivative(expr_, static_cast<int>(c)));
}

double PerceptionMetric::eval(std::span<const double> m) const { return viewfield::eval(*expr_, m); }

std::vector<double> PerceptionMetric::grad(std::span<const double> m) const {
  std::vector<double> g(derivatives_.size());
  for (std::size_t c = 0; c < g.size(); ++c) g[c] = viewfield::eval(*derivatives_[c], m);
  return g;
}

}  // namespace viewfield
