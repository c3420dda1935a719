#include "perronlab/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <system_error>

namespace perronlab {

ParseError::ParseError(Kind kind, std::size_t position, const std::string& what)
    : std::runtime_error(what + " at position " + std::to_string(position)),
      kind_(kind),
      position_(position) {}

Expr::Expr() : Expr(std::vector<ExprNode>{ExprNode{}}, 1) {}

Expr::Expr(std::vector<ExprNode> nodes, int dim)
    : nodes_(std::make_shared<const std::vector<ExprNode>>(std::move(nodes))), dim_(dim) {
  if (nodes_->empty()) throw std::invalid_argument("empty expression");
  if (dim_ < 1) throw std::invalid_argument("expression dimension must be positive");
}

Expr Expr::constant(double v, int dim) {
  ExprNode n;
  n.op = Op::Const;
  n.value = v;
  return Expr({n}, dim);
}

bool Expr::is_constant() const { return root().op == Op::Const; }

namespace {

int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Time:
    case Op::Var:
      return 0;
    case Op::Neg:
    case Op::Exp:
    case Op::Tanh:
    case Op::Sin:
    case Op::Cos:
    case Op::Abs:
      return 1;
    default:
      return 2;
  }
}

const char* func_name(Op op) {
  switch (op) {
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Abs: return "abs";
    case Op::Min: return "min";
    case Op::Max: return "max";
    default: return "";
  }
}

std::vector<char> dependency_mask(const std::vector<ExprNode>& nodes, int var) {
  std::vector<char> dep(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.op == Op::Time) dep[i] = var == 0;
    else if (n.op == Op::Var) dep[i] = var == n.var + 1;
    else if (n.lhs >= 0) dep[i] = dep[n.lhs] || (n.rhs >= 0 && dep[n.rhs]);
  }
  return dep;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

[[noreturn]] void domain_fail(const char* what, double t, const double* x, int dim) {
  std::string msg = std::string("domain error: ") + what + " at t=" + format_double(t);
  for (int i = 0; i < dim; ++i) msg += " x" + std::to_string(i + 1) + "=" + format_double(x[i]);
  throw DomainError(msg);
}

double eval_nodes(const std::vector<ExprNode>& nodes, int dim, double t, const double* x,
                  double* buf) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    double v = 0.0;
    switch (n.op) {
      case Op::Const: v = n.value; break;
      case Op::Time: v = t; break;
      case Op::Var: v = x[n.var]; break;
      case Op::Neg: v = -buf[n.lhs]; break;
      case Op::Add: v = buf[n.lhs] + buf[n.rhs]; break;
      case Op::Sub: v = buf[n.lhs] - buf[n.rhs]; break;
      case Op::Mul: v = buf[n.lhs] * buf[n.rhs]; break;
      case Op::Div:
        if (buf[n.rhs] == 0.0) domain_fail("division by zero", t, x, dim);
        v = buf[n.lhs] / buf[n.rhs];
        break;
      case Op::Pow: v = std::pow(buf[n.lhs], buf[n.rhs]); break;
      case Op::Exp: v = std::exp(buf[n.lhs]); break;
      case Op::Tanh: v = std::tanh(buf[n.lhs]); break;
      case Op::Sin: v = std::sin(buf[n.lhs]); break;
      case Op::Cos: v = std::cos(buf[n.lhs]); break;
      case Op::Abs: v = std::fabs(buf[n.lhs]); break;
      case Op::Min: v = std::min(buf[n.lhs], buf[n.rhs]); break;
      case Op::Max: v = std::max(buf[n.lhs], buf[n.rhs]); break;
    }
    if (!std::isfinite(v)) domain_fail("non-finite value", t, x, dim);
    buf[i] = v;
  }
  return buf[nodes.size() - 1];
}

}  // namespace

bool Expr::depends_on(int var) const { return dependency_mask(*nodes_, var).back() != 0; }

bool Expr::smooth() const {
  for (const auto& n : *nodes_)
    if (n.op == Op::Abs || n.op == Op::Min || n.op == Op::Max) return false;
  return true;
}

double Expr::operator()(double t, const double* x) const {
  const auto& nodes = *nodes_;
  if (nodes.size() <= 64) {
    std::array<double, 64> buf;
    return eval_nodes(nodes, dim_, t, x, buf.data());
  }
  std::vector<double> buf(nodes.size());
  return eval_nodes(nodes, dim_, t, x, buf.data());
}

double Expr::operator()(double t, const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw std::invalid_argument("point dimension does not match expression");
  return (*this)(t, x.data());
}

double eval(const Expr& e, double t, const Eigen::VectorXd& x) { return e(t, x); }

bool operator==(const Expr& a, const Expr& b) {
  if (a.dim() != b.dim()) return false;
  const auto& na = a.nodes();
  const auto& nb = b.nodes();
  std::function<bool(int, int)> same = [&](int i, int j) -> bool {
    const auto& p = na[i];
    const auto& q = nb[j];
    if (p.op != q.op) return false;
    switch (p.op) {
      case Op::Const:
        return std::memcmp(&p.value, &q.value, sizeof(double)) == 0;
      case Op::Time: return true;
      case Op::Var: return p.var == q.var;
      default: break;
    }
    if (!same(p.lhs, q.lhs)) return false;
    return arity(p.op) == 1 || same(p.rhs, q.rhs);
  };
  return same(static_cast<int>(na.size()) - 1, static_cast<int>(nb.size()) - 1);
}

// ---------------------------------------------------------------- parser

namespace {

class Parser {
 public:
  Parser(std::string_view src, int dim) : src_(src), dim_(dim) {}

  Expr run() {
    expr();
    skip_ws();
    if (pos_ < src_.size()) fail(ParseError::Kind::Syntax, "unexpected '" + std::string(1, src_[pos_]) + "'");
    return Expr(std::move(nodes_), dim_);
  }

 private:
  std::string_view src_;
  int dim_;
  std::size_t pos_ = 0;
  std::vector<ExprNode> nodes_;

  [[noreturn]] void fail(ParseError::Kind kind, const std::string& what) { fail_at(kind, pos_, what); }
  [[noreturn]] void fail_at(ParseError::Kind kind, std::size_t at, const std::string& what) {
    throw ParseError(kind, at, what);
  }

  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size()) fail(ParseError::Kind::Syntax, std::string("expected '") + c + "' before end of input");
      fail(ParseError::Kind::Syntax, std::string("expected '") + c + "'");
    }
  }

  int push(ExprNode n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }
  int binary(Op op, int l, int r) {
    ExprNode n;
    n.op = op;
    n.lhs = l;
    n.rhs = r;
    return push(n);
  }

  int expr() {
    int lhs = term();
    for (;;) {
      if (accept('+')) lhs = binary(Op::Add, lhs, term());
      else if (accept('-')) lhs = binary(Op::Sub, lhs, term());
      else return lhs;
    }
  }
  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*')) lhs = binary(Op::Mul, lhs, unary());
      else if (accept('/')) lhs = binary(Op::Div, lhs, unary());
      else return lhs;
    }
  }
  int unary() {
    if (accept('-')) {
      int a = unary();
      ExprNode n;
      n.op = Op::Neg;
      n.lhs = a;
      return push(n);
    }
    return power();
  }
  int power() {
    int base = primary();
    if (accept('^')) return binary(Op::Pow, base, unary());
    return base;
  }

  int number() {
    std::size_t start = pos_;
    auto is_digit = [&](std::size_t i) { return i < src_.size() && src_[i] >= '0' && src_[i] <= '9'; };
    while (is_digit(pos_)) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (is_digit(pos_)) ++pos_;
    }
    if (pos_ == start + 1 && src_[start] == '.') fail_at(ParseError::Kind::BadLiteral, start, "malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (!is_digit(pos_)) {
        pos_ = save;
        fail_at(ParseError::Kind::BadLiteral, start, "malformed exponent in number");
      }
      while (is_digit(pos_)) ++pos_;
    }
    double v = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (res.ec == std::errc::result_out_of_range)
      fail_at(ParseError::Kind::BadLiteral, start, "numeric literal out of double range");
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
      fail_at(ParseError::Kind::BadLiteral, start, "malformed number");
    ExprNode n;
    n.op = Op::Const;
    n.value = v;
    return push(n);
  }

  int primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail(ParseError::Kind::Syntax, "unexpected end of input");
    char c = src_[pos_];
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (c == '(') {
      ++pos_;
      int inner = expr();
      expect(')');
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(ParseError::Kind::Syntax, "unexpected '" + std::string(1, c) + "'");
  }

  int identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    if (name == "t") {
      ExprNode n;
      n.op = Op::Time;
      return push(n);
    }
    if (name.size() >= 2 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      if (name.size() > 10) fail_at(ParseError::Kind::VariableOutOfRange, start, "variable index out of range: " + name);
      long idx = std::stol(name.substr(1));
      if (idx < 1 || idx > dim_)
        fail_at(ParseError::Kind::VariableOutOfRange, start,
                "variable index out of range: " + name + " (dimension " + std::to_string(dim_) + ")");
      ExprNode n;
      n.op = Op::Var;
      n.var = static_cast<int>(idx - 1);
      return push(n);
    }
    static const std::pair<const char*, Op> funcs[] = {
        {"exp", Op::Exp}, {"tanh", Op::Tanh}, {"sin", Op::Sin}, {"cos", Op::Cos},
        {"abs", Op::Abs}, {"min", Op::Min},   {"max", Op::Max}};
    for (const auto& [fname, op] : funcs) {
      if (name != fname) continue;
      skip_ws();
      if (pos_ >= src_.size() || src_[pos_] != '(')
        fail(ParseError::Kind::Syntax, "expected '(' after " + name);
      ++pos_;
      int a = expr();
      ExprNode n;
      n.op = op;
      n.lhs = a;
      if (arity(op) == 2) {
        expect(',');
        n.rhs = expr();
      }
      expect(')');
      return push(n);
    }
    fail_at(ParseError::Kind::UnknownIdentifier, start, "unknown identifier '" + name + "'");
  }
};

}  // namespace

Expr parse(std::string_view source, int dim) {
  if (dim < 1) throw std::invalid_argument("dimension must be positive");
  return Parser(source, dim).run();
}

// ---------------------------------------------------------------- printer

namespace {

void print_node(const std::vector<ExprNode>& nodes, int i, std::string& out) {
  const auto& n = nodes[i];
  switch (n.op) {
    case Op::Const:
      if (std::signbit(n.value)) {
        out += "(-";
        out += format_double(-n.value);
        out += ")";
      } else {
        out += format_double(n.value);
      }
      return;
    case Op::Time: out += "t"; return;
    case Op::Var: out += "x" + std::to_string(n.var + 1); return;
    case Op::Neg:
      out += "(-";
      print_node(nodes, n.lhs, out);
      out += ")";
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow: {
      static const char sym[] = {'+', '-', '*', '/', '^'};
      out += "(";
      print_node(nodes, n.lhs, out);
      out += sym[static_cast<int>(n.op) - static_cast<int>(Op::Add)];
      print_node(nodes, n.rhs, out);
      out += ")";
      return;
    }
    default:
      out += func_name(n.op);
      out += "(";
      print_node(nodes, n.lhs, out);
      if (arity(n.op) == 2) {
        out += ",";
        print_node(nodes, n.rhs, out);
      }
      out += ")";
      return;
  }
}

}  // namespace

std::string print(const Expr& e) {
  std::string out;
  print_node(e.nodes(), static_cast<int>(e.size()) - 1, out);
  return out;
}

// ---------------------------------------------------------------- builders

namespace build {

namespace {

Expr combine(Op op, const Expr& a, const Expr* b) {
  if (b && a.dim() != b->dim()) throw std::invalid_argument("dimension mismatch in expression builder");
  std::vector<ExprNode> nodes = a.nodes();
  int lhs = static_cast<int>(nodes.size()) - 1;
  int rhs = -1;
  if (b) {
    int off = static_cast<int>(nodes.size());
    for (ExprNode n : b->nodes()) {
      if (n.lhs >= 0) n.lhs += off;
      if (n.rhs >= 0) n.rhs += off;
      nodes.push_back(n);
    }
    rhs = static_cast<int>(nodes.size()) - 1;
  }
  ExprNode n;
  n.op = op;
  n.lhs = lhs;
  n.rhs = rhs;
  nodes.push_back(n);
  return Expr(std::move(nodes), a.dim());
}

bool is_value(const Expr& e, double v) { return e.is_constant() && e.root().value == v; }

// Fold only when the result stays finite; otherwise keep the node so that
// evaluation reports the domain error.
bool fold(double v, int dim, Expr& out) {
  if (!std::isfinite(v)) return false;
  out = Expr::constant(v, dim);
  return true;
}

}  // namespace

Expr num(double v, int dim) { return Expr::constant(v, dim); }

Expr time(int dim) {
  ExprNode n;
  n.op = Op::Time;
  return Expr({n}, dim);
}

Expr var(int i, int dim) {
  if (i < 0 || i >= dim) throw std::invalid_argument("variable index out of range");
  ExprNode n;
  n.op = Op::Var;
  n.var = i;
  return Expr({n}, dim);
}

Expr neg(const Expr& a) {
  Expr out;
  if (a.is_constant() && fold(-a.root().value, a.dim(), out)) return out;
  if (a.root().op == Op::Neg) {
    std::vector<ExprNode> nodes(a.nodes().begin(), a.nodes().begin() + a.root().lhs + 1);
    return Expr(std::move(nodes), a.dim());
  }
  return combine(Op::Neg, a, nullptr);
}

Expr add(const Expr& a, const Expr& b) {
  Expr out;
  if (a.is_constant() && b.is_constant() && fold(a.root().value + b.root().value, a.dim(), out)) return out;
  if (is_value(a, 0.0)) return b;
  if (is_value(b, 0.0)) return a;
  return combine(Op::Add, a, &b);
}

Expr sub(const Expr& a, const Expr& b) {
  Expr out;
  if (a.is_constant() && b.is_constant() && fold(a.root().value - b.root().value, a.dim(), out)) return out;
  if (is_value(b, 0.0)) return a;
  if (is_value(a, 0.0)) return neg(b);
  return combine(Op::Sub, a, &b);
}

Expr mul(const Expr& a, const Expr& b) {
  Expr out;
  if (a.is_constant() && b.is_constant() && fold(a.root().value * b.root().value, a.dim(), out)) return out;
  if (is_value(a, 0.0) || is_value(b, 0.0)) return num(0.0, a.dim());
  if (is_value(a, 1.0)) return b;
  if (is_value(b, 1.0)) return a;
  if (is_value(a, -1.0)) return neg(b);
  if (is_value(b, -1.0)) return neg(a);
  return combine(Op::Mul, a, &b);
}

Expr div(const Expr& a, const Expr& b) {
  Expr out;
  if (a.is_constant() && b.is_constant() && b.root().value != 0.0 &&
      fold(a.root().value / b.root().value, a.dim(), out))
    return out;
  if (is_value(a, 0.0) && !(b.is_constant() && b.root().value == 0.0)) return num(0.0, a.dim());
  if (is_value(b, 1.0)) return a;
  return combine(Op::Div, a, &b);
}

Expr pow(const Expr& a, const Expr& b) {
  Expr out;
  if (a.is_constant() && b.is_constant() && fold(std::pow(a.root().value, b.root().value), a.dim(), out))
    return out;
  if (is_value(b, 1.0)) return a;
  if (is_value(b, 0.0)) return num(1.0, a.dim());
  return combine(Op::Pow, a, &b);
}

Expr call(Op f, const Expr& a) {
  if (arity(f) != 1 || f == Op::Neg) throw std::invalid_argument("not a unary function");
  Expr out;
  if (a.is_constant()) {
    double v = a.root().value;
    double r = 0.0;
    switch (f) {
      case Op::Exp: r = std::exp(v); break;
      case Op::Tanh: r = std::tanh(v); break;
      case Op::Sin: r = std::sin(v); break;
      case Op::Cos: r = std::cos(v); break;
      case Op::Abs: r = std::fabs(v); break;
      default: break;
    }
    if (fold(r, a.dim(), out)) return out;
  }
  return combine(f, a, nullptr);
}

}  // namespace build

// ---------------------------------------------------------------- derivative

namespace {

class Differentiator {
 public:
  Differentiator(const Expr& e, int var)
      : nodes_(e.nodes()), dim_(e.dim()), var_(var), dep_(dependency_mask(e.nodes(), var)) {
    sub_.resize(nodes_.size());
    have_.assign(nodes_.size(), 0);
  }

  Expr run() { return d(static_cast<int>(nodes_.size()) - 1); }

 private:
  const std::vector<ExprNode>& nodes_;
  int dim_;
  int var_;
  std::vector<char> dep_;
  std::vector<Expr> sub_;
  std::vector<char> have_;

  // Rebuild the subtree rooted at i as a standalone expression.
  const Expr& subtree(int i) {
    if (have_[i]) return sub_[i];
    const auto& n = nodes_[i];
    Expr out;
    switch (n.op) {
      case Op::Const: out = Expr::constant(n.value, dim_); break;
      case Op::Time: out = build::time(dim_); break;
      case Op::Var: out = build::var(n.var, dim_); break;
      default: {
        std::vector<ExprNode> nodes;
        copy_into(i, nodes);
        out = Expr(std::move(nodes), dim_);
      }
    }
    sub_[i] = out;
    have_[i] = 1;
    return sub_[i];
  }

  int copy_into(int i, std::vector<ExprNode>& out) {
    ExprNode n = nodes_[i];
    if (n.lhs >= 0) n.lhs = copy_into(n.lhs, out);
    if (n.rhs >= 0) n.rhs = copy_into(n.rhs, out);
    out.push_back(n);
    return static_cast<int>(out.size()) - 1;
  }

  std::string var_name() const { return var_ == 0 ? "t" : "x" + std::to_string(var_); }

  Expr d(int i) {
    using namespace build;
    Expr zero = num(0.0, dim_);
    if (!dep_[i]) return zero;
    const auto& n = nodes_[i];
    switch (n.op) {
      case Op::Const: return zero;
      case Op::Time:
      case Op::Var: return num(1.0, dim_);
      case Op::Neg: return neg(d(n.lhs));
      case Op::Add: return add(d(n.lhs), d(n.rhs));
      case Op::Sub: return sub(d(n.lhs), d(n.rhs));
      case Op::Mul: {
        const Expr& a = subtree(n.lhs);
        const Expr& b = subtree(n.rhs);
        return add(mul(d(n.lhs), b), mul(a, d(n.rhs)));
      }
      case Op::Div: {
        const Expr& a = subtree(n.lhs);
        const Expr& b = subtree(n.rhs);
        Expr first = div(d(n.lhs), b);
        Expr second = div(mul(a, d(n.rhs)), mul(b, b));
        return sub(first, second);
      }
      case Op::Pow: {
        if (dep_[n.rhs])
          throw DifferentiationError("cannot differentiate a power with exponent depending on " + var_name());
        const Expr& a = subtree(n.lhs);
        const Expr& b = subtree(n.rhs);
        Expr reduced = pow(a, sub(b, num(1.0, dim_)));
        return mul(mul(b, reduced), d(n.lhs));
      }
      case Op::Exp: return mul(subtree(i), d(n.lhs));
      case Op::Tanh: {
        const Expr& th = subtree(i);
        return mul(sub(num(1.0, dim_), mul(th, th)), d(n.lhs));
      }
      case Op::Sin: return mul(call(Op::Cos, subtree(n.lhs)), d(n.lhs));
      case Op::Cos: return neg(mul(call(Op::Sin, subtree(n.lhs)), d(n.lhs)));
      case Op::Abs:
      case Op::Min:
      case Op::Max:
        throw DifferentiationError(std::string(func_name(n.op)) + " is not differentiable with respect to " +
                                   var_name());
    }
    return zero;
  }
};

}  // namespace

Expr differentiate(const Expr& e, int var) {
  if (var < 0 || var > e.dim()) throw std::invalid_argument("differentiation variable out of range");
  return Differentiator(e, var).run();
}

}  // namespace perronlab
