#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/errors.hpp"

namespace perronlab {

enum class Op : std::uint8_t {
  Const,
  Time,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Exp,
  Tanh,
  Sin,
  Cos,
  Abs,
  Min,
  Max
};

struct ExprNode {
  Op op = Op::Const;
  double value = 0.0;  // Const only
  int var = 0;         // Var only, zero based
  int lhs = -1;
  int rhs = -1;
};

/// Immutable expression over t and x1..xd. Nodes are stored children first,
/// the root is the last node. Copies share storage.
class Expr {
 public:
  Expr();  // the constant 0 in dimension 1
  Expr(std::vector<ExprNode> nodes, int dim);

  static Expr constant(double v, int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return nodes_->size(); }
  const std::vector<ExprNode>& nodes() const { return *nodes_; }
  const ExprNode& root() const { return nodes_->back(); }

  bool is_constant() const;
  /// True when the value can change with variable `var` (0 = t, i = x_i).
  bool depends_on(int var) const;
  bool smooth() const;  // no min/max/abs anywhere

  double operator()(double t, const double* x) const;
  double operator()(double t, const Eigen::VectorXd& x) const;

 private:
  std::shared_ptr<const std::vector<ExprNode>> nodes_;
  int dim_ = 1;
};

/// Tree equality (structure and bit-identical constants).
bool operator==(const Expr& a, const Expr& b);

Expr parse(std::string_view source, int dim);
double eval(const Expr& e, double t, const Eigen::VectorXd& x);
/// var = 0 differentiates in t, var = i in x_i.
Expr differentiate(const Expr& e, int var);
/// Fully parenthesised, shortest round-trip literals.
std::string print(const Expr& e);

/// Folding builders shared by differentiate and the test-function constructors.
namespace build {
Expr num(double v, int dim);
Expr time(int dim);
Expr var(int i, int dim);  // zero based
Expr neg(const Expr& a);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr div(const Expr& a, const Expr& b);
Expr pow(const Expr& a, const Expr& b);
Expr call(Op f, const Expr& a);
}  // namespace build

}  // namespace perronlab
