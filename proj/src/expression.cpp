#include "limcur/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <stdexcept>

namespace limcur {

namespace {

double signed_pow(double a, double q) {
  double r = std::round(q);
  if (std::abs(q - r) < 1e-12 && std::abs(r) <= 64.0) return std::pow(a, r);
  double s = a < 0 ? -1.0 : 1.0;
  return s * std::pow(std::abs(a), q);
}

}  // namespace

struct Expression::Node {
  // op codes: 'n' number, 'v' variable (idx 0/1), 'f' function call, binary
  // ops '+', '-', '*', '/', '^', unary 'm' (negate).
  char op = 'n';
  double value = 0.0;
  int var = 0;
  int fn = -1;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

enum Fn { F_MIN, F_MAX, F_ABS, F_SIGN, F_SQRT, F_SIN, F_COS, F_EXP, F_LOG, F_ATAN, F_ATAN2, F_POW };

struct FnDef {
  const char* name;
  int arity;
};
const FnDef kFns[] = {{"min", 2},  {"max", 2}, {"abs", 1}, {"sign", 1},
                      {"sqrt", 1}, {"sin", 1}, {"cos", 1}, {"exp", 1},
                      {"log", 1},  {"atan", 1}, {"atan2", 2}, {"pow", 2}};

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument("expression error at position " + std::to_string(pos_) + ": " +
                                msg + " in \"" + s_ + "\"");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  static NodePtr make(char op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (eat('+'))
        lhs = make('+', lhs, term());
      else if (eat('-'))
        lhs = make('-', lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    for (;;) {
      if (eat('*'))
        lhs = make('*', lhs, factor());
      else if (eat('/'))
        lhs = make('/', lhs, factor());
      else
        return lhs;
    }
  }

  // Right-associative power binds tighter than unary minus on the left,
  // looser on the right: -x^2 = -(x^2), x^-2 parses via unary in exponent.
  NodePtr factor() {
    if (eat('-')) return make('m', factor());
    if (eat('+')) return factor();
    NodePtr base = primary();
    if (eat('^')) return make('^', base, factor());
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident();
    if (eat('(')) {
      NodePtr e = expr();
      if (!eat(')')) fail("missing ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail("bad number");
    pos_ += static_cast<std::size_t>(end - begin);
    auto n = std::make_shared<Expression::Node>();
    n->op = 'n';
    n->value = v;
    return n;
  }

  NodePtr ident() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string name = s_.substr(start, pos_ - start);
    if (name == "x1" || name == "x") return variable(0);
    if (name == "x2" || name == "y") return variable(1);
    if (name == "pi") {
      auto n = std::make_shared<Expression::Node>();
      n->op = 'n';
      n->value = 3.14159265358979323846264338327950288;
      return n;
    }
    for (int f = 0; f != static_cast<int>(std::size(kFns)); ++f) {
      if (name == kFns[f].name) return call(f);
    }
    pos_ = start;
    fail("unknown identifier \"" + name + "\"");
  }

  NodePtr variable(int idx) {
    auto n = std::make_shared<Expression::Node>();
    n->op = 'v';
    n->var = idx;
    return n;
  }

  NodePtr call(int f) {
    if (!eat('(')) fail(std::string("expected '(' after ") + kFns[f].name);
    NodePtr a = expr();
    NodePtr b;
    if (kFns[f].arity == 2) {
      if (!eat(',')) fail(std::string(kFns[f].name) + " takes two arguments");
      b = expr();
    }
    if (!eat(')')) fail("missing ')'");
    auto n = std::make_shared<Expression::Node>();
    n->op = 'f';
    n->fn = f;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
};

double eval_node(const Expression::Node* n, double x1, double x2) {
  switch (n->op) {
    case 'n': return n->value;
    case 'v': return n->var == 0 ? x1 : x2;
    case 'm': return -eval_node(n->a.get(), x1, x2);
    case '+': return eval_node(n->a.get(), x1, x2) + eval_node(n->b.get(), x1, x2);
    case '-': return eval_node(n->a.get(), x1, x2) - eval_node(n->b.get(), x1, x2);
    case '*': return eval_node(n->a.get(), x1, x2) * eval_node(n->b.get(), x1, x2);
    case '/': return eval_node(n->a.get(), x1, x2) / eval_node(n->b.get(), x1, x2);
    case '^': return signed_pow(eval_node(n->a.get(), x1, x2), eval_node(n->b.get(), x1, x2));
    case 'f': {
      double a = eval_node(n->a.get(), x1, x2);
      double b = n->b ? eval_node(n->b.get(), x1, x2) : 0.0;
      switch (n->fn) {
        case F_MIN: return a < b ? a : b;
        case F_MAX: return a > b ? a : b;
        case F_ABS: return std::abs(a);
        case F_SIGN: return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        case F_SQRT: return std::sqrt(a);
        case F_SIN: return std::sin(a);
        case F_COS: return std::cos(a);
        case F_EXP: return std::exp(a);
        case F_LOG: return std::log(a);
        case F_ATAN: return std::atan(a);
        case F_ATAN2: return std::atan2(a, b);
        case F_POW: return signed_pow(a, b);
      }
      break;
    }
  }
  throw std::logic_error("corrupt expression node");
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  Parser p(text);
  Expression e;
  e.root_ = p.parse();
  e.text_ = text;
  return e;
}

double Expression::eval(double x1, double x2) const {
  return eval_node(root_.get(), x1, x2);
}

std::vector<Expression> parse_components(const std::string& text) {
  std::vector<Expression> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t semi = text.find(';', start);
    std::string part = text.substr(start, semi == std::string::npos ? semi : semi - start);
    out.push_back(Expression::parse(part));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  return out;
}

}  // namespace limcur
