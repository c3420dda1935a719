#include "perronlab/sde.hpp"

#include <cmath>
#include <sstream>

#include "perronlab/parallel.hpp"
#include "perronlab/rng.hpp"

namespace perronlab {

Eigen::VectorXd PathBundle::state(long m, int k) const {
  Eigen::VectorXd x(d());
  for (int j = 0; j < d(); ++j) x(j) = state(m, k, j);
  return x;
}

Eigen::VectorXd step_times(double s, double T, int N) {
  Eigen::VectorXd t(N + 1);
  for (int k = 0; k <= N; ++k) t(k) = s + (T - s) * static_cast<double>(k) / N;
  t(N) = T;
  return t;
}

namespace {

void check_args(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N) {
  if (!(s >= 0.0 && s < p.T())) throw std::invalid_argument("start time must satisfy 0 <= s < T");
  if (M < 1) throw std::invalid_argument("path count must be >= 1");
  if (N < 1) throw std::invalid_argument("step count must be >= 1");
  if (x0.size() != p.d()) throw std::invalid_argument("start point has wrong dimension");
  if (!x0.allFinite()) throw std::invalid_argument("start point must be finite");
}

// Advance one path through all steps; `visit(k, x)` sees every state.
template <class Visit>
void run_path(const Problem& p, const Eigen::VectorXd& t, const Eigen::VectorXd& x0, long m, std::uint64_t seed,
              const SimulationOptions& opt, Visit&& visit) {
  const int d = p.d();
  const int dp = p.dprime();
  const int N = static_cast<int>(t.size()) - 1;
  double x[16], b[16], z[16], sig[256];
  if (d > 16 || dp > 16) throw std::invalid_argument("simulation supports at most 16 dimensions");
  for (int j = 0; j < d; ++j) x[j] = x0(j);
  visit(0, x);
  for (int k = 0; k < N; ++k) {
    const double dt = t(k + 1) - t(k);
    const double sq = std::sqrt(dt);
    p.drift(t(k), x, b);
    p.diffusion(t(k), x, sig);
    normals(seed, static_cast<std::uint64_t>(m), static_cast<std::uint32_t>(k), dp, z);
    bool bad = false;
    for (int i = 0; i < d; ++i) {
      double dx = b[i] * dt;
      for (int j = 0; j < dp; ++j) dx += sig[i * dp + j] * z[j] * sq;
      x[i] += dx;
      if (!std::isfinite(x[i]) || std::fabs(x[i]) > opt.escape_radius) bad = true;
    }
    if (bad) {
      std::ostringstream os;
      os << "path " << m << " exploded at step " << k + 1 << " (escape radius " << opt.escape_radius << ")";
      throw ExplosionError(m, k + 1, os.str());
    }
    visit(k + 1, x);
  }
}

}  // namespace

PathBundle simulate(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N, std::uint64_t seed,
                    const SimulationOptions& opt) {
  check_args(p, s, x0, M, N);
  PathBundle out;
  out.s = s;
  out.x0 = x0;
  out.seed = seed;
  out.time_nodes = step_times(s, p.T(), N);
  const int d = p.d();
  out.paths.resize(M, static_cast<long>(N + 1) * d);
  auto body = [&](long b, long e) {
    for (long m = b; m < e; ++m)
      run_path(p, out.time_nodes, x0, m, seed, opt, [&](int k, const double* x) {
        for (int j = 0; j < d; ++j) out.paths(m, static_cast<long>(k) * d + j) = x[j];
      });
  };
  if (opt.parallel) parallel_for(M, body);
  else body(0, M);
  return out;
}

Eigen::MatrixXd simulate_terminal(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N,
                                  std::uint64_t seed, const SimulationOptions& opt) {
  check_args(p, s, x0, M, N);
  const Eigen::VectorXd t = step_times(s, p.T(), N);
  const int d = p.d();
  Eigen::MatrixXd out(M, d);
  auto body = [&](long b, long e) {
    for (long m = b; m < e; ++m)
      run_path(p, t, x0, m, seed, opt, [&](int k, const double* x) {
        if (k == N)
          for (int j = 0; j < d; ++j) out(m, j) = x[j];
      });
  };
  if (opt.parallel) parallel_for(M, body);
  else body(0, M);
  return out;
}

Eigen::VectorXd terminal_payoff(const Eigen::MatrixXd& terminal_states, double T, const Expr& g) {
  const long M = terminal_states.rows();
  Eigen::VectorXd out(M);
  Eigen::VectorXd x(terminal_states.cols());
  for (long m = 0; m < M; ++m) {
    x = terminal_states.row(m).transpose();
    try {
      out(m) = g(T, x);
    } catch (const DomainError& e) {
      throw DomainError("payoff on path " + std::to_string(m) + ": " + e.what());
    }
  }
  return out;
}

Eigen::VectorXd terminal_payoff(const PathBundle& bundle, const Expr& g) {
  const int d = bundle.d();
  Eigen::MatrixXd last = bundle.paths.rightCols(d);
  return terminal_payoff(last, bundle.time_nodes(bundle.N()), g);
}

}  // namespace perronlab
