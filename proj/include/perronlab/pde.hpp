#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/lattice.hpp"
#include "perronlab/problem.hpp"

namespace perronlab {

struct GeneratorEval {
  double drift = 0.0;      // <b, grad u>
  double diffusion = 0.0;  // 1/2 Tr(sigma sigma^T u_xx)
  double u_t = 0.0;
  double residual = 0.0;  // -u_t - drift - diffusion
};

/// An expression together with its symbolic first and second derivatives.
/// Construction throws DifferentiationError for non-smooth expressions.
struct SmoothFn {
  Expr u;
  Expr u_t;
  std::vector<Expr> u_x;   // d
  std::vector<Expr> u_xx;  // d x d row major

  explicit SmoothFn(const Expr& e);
};

GeneratorEval apply_generator(const Problem& p, const SmoothFn& u, double t, const Eigen::VectorXd& x);
GeneratorEval apply_generator(const Problem& p, const Expr& u, double t, const Eigen::VectorXd& x);

/// Finite-difference version at node (k, s): forward difference in time
/// (k < nt - 1), central differences in space (s interior). Throws
/// std::invalid_argument at other nodes.
GeneratorEval apply_generator(const Problem& p, const GridFn& u, int k, int s);

bool residual_node(const Grid& g, int k, int s);

/// Drift and sigma sigma^T sampled at every grid node, for repeated
/// residual sweeps over one grid.
struct CoefficientTable {
  std::shared_ptr<const Grid> grid;
  Eigen::MatrixXd b;  // (nt * ns) x d, row k * ns + s
  Eigen::MatrixXd a;  // (nt * ns) x (d * d)
};
CoefficientTable tabulate(const Problem& p, std::shared_ptr<const Grid> grid);

/// -D_t u - L_h u at every residual node; zero elsewhere.
Eigen::MatrixXd discrete_residual(const Problem& p, const GridFn& u);
Eigen::MatrixXd discrete_residual(const CoefficientTable& c, const GridFn& u);
double discrete_residual_at(const CoefficientTable& c, const Eigen::MatrixXd& values, int k, int s);

struct SolveOptions {
  double theta = 0.5;
};

struct SolveResult {
  GridFn u;
  double max_abs_residual = 0.0;
  double residual_constant = 0.0;  // max |r| / (dt + dx^2)
  int upwind_nodes = 0;            // node-steps where the drift switched to upwind
  std::vector<std::string> warnings;
};

/// Backward theta-scheme for -u_t - L u = 0, u(T) = g, Dirichlet u = g on the
/// box boundary. Diffusion must be diagonal on the grid.
SolveResult solve_terminal_value(const Problem& p, std::shared_ptr<const Grid> grid, const SolveOptions& opt = {});

}  // namespace perronlab
