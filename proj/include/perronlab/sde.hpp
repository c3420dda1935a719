#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/problem.hpp"

namespace perronlab {

struct SimulationOptions {
  double escape_radius = 1e6;  // max-norm bound before a path counts as exploded
  bool parallel = true;        // split paths across worker threads
};

/// M Euler-Maruyama paths on s = t_0 < ... < t_N = T.
struct PathBundle {
  double s = 0.0;
  Eigen::VectorXd x0;
  Eigen::VectorXd time_nodes;  // N + 1
  /// M rows; row m holds the path flattened as [k * d + j].
  Eigen::MatrixXd paths;
  std::uint64_t seed = 0;
  const char* scheme = "euler_maruyama";

  int d() const { return static_cast<int>(x0.size()); }
  long M() const { return paths.rows(); }
  int N() const { return static_cast<int>(time_nodes.size()) - 1; }
  double state(long m, int k, int j) const { return paths(m, static_cast<long>(k) * d() + j); }
  Eigen::VectorXd state(long m, int k) const;
};

/// Uniform step times s + (T - s) k / N with the last node exactly T.
Eigen::VectorXd step_times(double s, double T, int N);

PathBundle simulate(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N, std::uint64_t seed,
                    const SimulationOptions& opt = {});

/// Terminal states only (M x d), identical to the last slice of simulate().
Eigen::MatrixXd simulate_terminal(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N,
                                  std::uint64_t seed, const SimulationOptions& opt = {});

Eigen::VectorXd terminal_payoff(const PathBundle& bundle, const Expr& g);
Eigen::VectorXd terminal_payoff(const Eigen::MatrixXd& terminal_states, double T, const Expr& g);

}  // namespace perronlab
