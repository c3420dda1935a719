#include "perronlab/montecarlo.hpp"

#include <cmath>

#include "perronlab/parallel.hpp"
#include "perronlab/rng.hpp"

namespace perronlab {

Estimate summarize(const Eigen::VectorXd& sample) {
  Estimate e;
  e.M = sample.size();
  if (e.M == 0) throw std::invalid_argument("empty sample");
  if (sample.minCoeff() == sample.maxCoeff()) {
    e.value = sample(0);
    e.stderr_ = 0.0;
  } else {
    double sum = 0.0;
    for (long i = 0; i < e.M; ++i) sum += sample(i);
    e.value = sum / static_cast<double>(e.M);
    double ss = 0.0;
    for (long i = 0; i < e.M; ++i) ss += (sample(i) - e.value) * (sample(i) - e.value);
    e.stderr_ = e.M > 1 ? std::sqrt(ss / static_cast<double>(e.M - 1) / static_cast<double>(e.M)) : 0.0;
  }
  e.ci95 = {e.value - 1.96 * e.stderr_, e.value + 1.96 * e.stderr_};
  return e;
}

Estimate estimate_value(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N, std::uint64_t seed,
                        const SimulationOptions& opt) {
  Eigen::MatrixXd xt = simulate_terminal(p, s, x0, M, N, seed, opt);
  return summarize(terminal_payoff(xt, p.T(), p.g()));
}

GridEstimate estimate_grid(const Problem& p, std::shared_ptr<const Grid> grid, long M, int N, std::uint64_t seed,
                           const SimulationOptions& opt) {
  const Grid& g = *grid;
  if (g.dim() != p.d()) throw std::invalid_argument("grid dimension does not match problem");
  for (int j = 0; j < g.dim(); ++j)
    if (g.space(j)(0) < p.lo()(j) || g.space(j)(g.nx(j) - 1) > p.hi()(j))
      throw std::invalid_argument("grid must lie inside the truncation box");
  if (std::fabs(g.t(g.nt() - 1) - p.T()) > 0.0) throw std::invalid_argument("grid must end at the horizon T");

  const int nt = g.nt();
  const int ns = g.space_size();
  Eigen::MatrixXd val = Eigen::MatrixXd::Zero(nt, ns);
  Eigen::MatrixXd err = Eigen::MatrixXd::Zero(nt, ns);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> ok = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nt, ns, true);
  std::vector<std::string> reason(static_cast<std::size_t>(nt) * ns);

  // Nodes are the parallel unit; paths inside a node run serially.
  SimulationOptions serial = opt;
  serial.parallel = false;
  parallel_for(
      static_cast<long>(nt) * ns,
      [&](long b, long e) {
        for (long n = b; n < e; ++n) {
          const int k = static_cast<int>(n / ns);
          const int s = static_cast<int>(n % ns);
          Eigen::VectorXd x = g.point(s);
          try {
            if (k == nt - 1) {
              val(k, s) = p.g()(p.T(), x);
              continue;
            }
            const std::uint64_t node_seed = derive_seed(seed, static_cast<std::uint64_t>(n));
            Eigen::MatrixXd xt = simulate_terminal(p, g.t(k), x, M, N, node_seed, serial);
            Estimate est = summarize(terminal_payoff(xt, p.T(), p.g()));
            val(k, s) = est.value;
            err(k, s) = est.stderr_;
          } catch (const std::exception& ex) {
            ok(k, s) = false;
            val(k, s) = 0.0;
            err(k, s) = 0.0;
            reason[n] = ex.what();
          }
        }
      },
      1);

  GridEstimate out{GridFn(grid, val, Regularity::Unknown), GridFn(grid, err, Regularity::Unknown), ok, {}, {}};
  for (int k = 0; k < nt; ++k)
    for (int s = 0; s < ns; ++s)
      if (!ok(k, s)) {
        out.invalid_nodes.emplace_back(k, s);
        out.invalid_reasons.push_back(reason[static_cast<std::size_t>(k) * ns + s]);
      }
  return out;
}

}  // namespace perronlab
