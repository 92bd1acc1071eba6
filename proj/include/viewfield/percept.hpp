#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace viewfield {

/// Denominators smaller than this in magnitude are replaced by a
/// sign-preserving copy of it.
inline constexpr double kDivisionFloor = 1e-9;

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression tree over distribution components.
struct Expr {
  enum class Kind { number, component, negate, add, subtract, multiply, divide };

  Kind kind = Kind::number;
  double value = 0;   ///< number
  int component = 0;  ///< component index
  std::string name;   ///< component name
  ExprPtr lhs, rhs;   ///< negate uses lhs only

  static ExprPtr number(double v);
  static ExprPtr ref(int component, std::string name);
  static ExprPtr unary(ExprPtr operand);
  static ExprPtr binary(Kind kind, ExprPtr lhs, ExprPtr rhs);
};

bool equal(const Expr& a, const Expr& b);

/// Grammar:
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | primary
///   primary := number | identifier | '(' expr ')'
/// Identifiers are component names, optionally written with an "m_" prefix.
/// Throws ParseError with a byte offset.
ExprPtr parse_expression(std::string_view text, const std::vector<std::string>& names);

double guarded(double denominator);

double eval(const Expr& e, std::span<const double> m);

/// d e / d m[component], simplified.
ExprPtr derivative(const ExprPtr& e, int component);

/// Fully parenthesized only where precedence or associativity demands it.
std::string to_string(const Expr& e);

/// Number of component references (repeats counted).
int reference_count(const Expr& e);

/// A named expression with its symbolic gradient compiled once.
class PerceptionMetric {
 public:
  PerceptionMetric(std::string name, std::string source, const std::vector<std::string>& components);

  const std::string& name() const { return name_; }
  const std::string& source() const { return source_; }
  const ExprPtr& expr() const { return expr_; }
  const std::vector<ExprPtr>& derivatives() const { return derivatives_; }

  double eval(std::span<const double> m) const;
  std::vector<double> grad(std::span<const double> m) const;

 private:
  std::string name_;
  std::string source_;
  ExprPtr expr_;
  std::vector<ExprPtr> derivatives_;
};

}  // namespace viewfield
