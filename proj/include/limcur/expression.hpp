// Arithmetic expression parser for user-supplied boundary data. Supports
// + - * / ^, parentheses, the coordinates x1/x2 (aliases x/y), the constant
// pi, and the functions min, max, abs, sign, sqrt, sin, cos, exp, log,
// atan, atan2, pow. Powers with non-integer exponents are evaluated as
// sign(base)*|base|^q so rational powers of negative arguments stay real.
#pragma once

#include <memory>
#include <string>
#include <vector>

namespace limcur {

class Expression {
 public:
  // Throws std::invalid_argument with a position marker on malformed input.
  static Expression parse(const std::string& text);

  double eval(double x1, double x2) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

// Semicolon-separated component list, one expression per target component.
std::vector<Expression> parse_components(const std::string& text);

}  // namespace limcur
