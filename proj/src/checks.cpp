#include "perronlab/checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "perronlab/parallel.hpp"
#include "perronlab/pde.hpp"
#include "perronlab/rng.hpp"
#include "perronlab/sde.hpp"

namespace perronlab {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Violated: return "violated";
    default: return "inconclusive";
  }
}

const char* to_string(MartingaleKind k) {
  switch (k) {
    case MartingaleKind::Super: return "supermartingale";
    case MartingaleKind::Sub: return "submartingale";
    default: return "martingale";
  }
}

Candidate Candidate::from_expr(const Expr& e, std::string label) {
  Candidate c;
  c.fn_ = [e](double t, const double* x, bool* clamped) {
    if (clamped) *clamped = false;
    return e(t, x);
  };
  c.label_ = label.empty() ? print(e) : std::move(label);
  return c;
}

Candidate Candidate::from_grid(const GridFn& f, std::string label) {
  Candidate c;
  c.grid_ = std::make_shared<const GridFn>(f);
  auto g = c.grid_;
  c.fn_ = [g](double t, const double* x, bool* clamped) { return g->interpolate(t, x, clamped); };
  c.label_ = label.empty() ? "grid function" : std::move(label);
  return c;
}

double Candidate::operator()(double t, const double* x, bool* clamped) const { return fn_(t, x, clamped); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
    if (cdf < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

bool rejects(MartingaleKind kind, double mean, double threshold) {
  switch (kind) {
    case MartingaleKind::Super: return mean > threshold;
    case MartingaleKind::Sub: return -mean > threshold;
    default: return std::fabs(mean) > threshold;
  }
}

MartingaleReport run_check(MartingaleKind kind, const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                           const MartingaleOptions& opt) {
  if (opt.M < 2) throw std::invalid_argument("martingale checks need at least 2 paths");
  if (opt.N < 1) throw std::invalid_argument("martingale checks need at least 1 step");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (opt.bins < 1) throw std::invalid_argument("bins must be >= 1");

  MartingaleReport rep;
  rep.label = u.label();
  rep.kind = kind;
  rep.options = opt;
  const int nb = static_cast<int>(std::min<long>(opt.bins, opt.M));
  rep.comparisons_per_start = opt.N * (1 + nb);
  const double level = kind == MartingaleKind::Martingale ? opt.alpha / (2.0 * rep.comparisons_per_start)
                                                          : opt.alpha / rep.comparisons_per_start;
  rep.critical_value = normal_quantile(1.0 - level);
  rep.coverage = "tested " + std::to_string(starts.size()) + " start point(s) under one Euler-Maruyama selection with " +
                 std::to_string(opt.M) + " paths and " + std::to_string(opt.N) +
                 " steps; no statement is made about other starts or other weak solutions";

  const int d = p.d();
  bool any_violated = false;
  bool all_consistent = true;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const Start& st = starts[i];
    PathBundle bundle = simulate(p, st.s, st.x, opt.M, opt.N, derive_seed(opt.seed, i));
    const long M = bundle.M();
    const int N = bundle.N();
    Eigen::MatrixXd U(M, N + 1);
    std::vector<long> clamped_per_path(M, 0);
    parallel_for(M, [&](long b, long e) {
      double x[16];
      for (long m = b; m < e; ++m)
        for (int k = 0; k <= N; ++k) {
          for (int j = 0; j < d; ++j) x[j] = bundle.state(m, k, j);
          bool c = false;
          U(m, k) = u(bundle.time_nodes(k), x, &c);
          if (c) ++clamped_per_path[m];
        }
    });

    StartReport sr;
    sr.start = st;
    sr.times = bundle.time_nodes;
    sr.means.resize(N + 1);
    sr.mean_se.resize(N + 1);
    sr.evaluations = M * (N + 1);
    sr.clamped = std::accumulate(clamped_per_path.begin(), clamped_per_path.end(), 0L);
    for (int k = 0; k <= N; ++k) {
      Estimate e = summarize(U.col(k));
      sr.means(k) = e.value;
      sr.mean_se(k) = e.stderr_;
    }

    bool marginal_rej = false;
    bool cond_rej = false;
    std::vector<long> order(M);
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd D = U.col(k + 1) - U.col(k);
      Estimate e = summarize(D);
      Comparison c;
      c.step = k;
      c.count = M;
      c.mean = e.value;
      c.stderr_ = e.stderr_;
      c.threshold = opt.allowance + rep.critical_value * e.stderr_;
      c.rejected = rejects(kind, c.mean, c.threshold);
      marginal_rej = marginal_rej || c.rejected;
      sr.max_marginal_stderr = std::max(sr.max_marginal_stderr, e.stderr_);
      sr.comparisons.push_back(c);

      // Equal-count bins over the first coordinate of X_{t_k}.
      std::iota(order.begin(), order.end(), 0L);
      std::stable_sort(order.begin(), order.end(),
                       [&](long a, long b) { return bundle.state(a, k, 0) < bundle.state(b, k, 0); });
      for (int bin = 0; bin < nb; ++bin) {
        const long b0 = M * bin / nb;
        const long b1 = M * (bin + 1) / nb;
        Eigen::VectorXd Db(b1 - b0);
        for (long q = b0; q < b1; ++q) Db(q - b0) = D(order[q]);
        Estimate eb = summarize(Db);
        Comparison cb;
        cb.step = k;
        cb.bin = bin;
        cb.count = b1 - b0;
        cb.mean = eb.value;
        cb.stderr_ = eb.stderr_;
        cb.threshold = opt.allowance + rep.critical_value * eb.stderr_;
        cb.rejected = rejects(kind, cb.mean, cb.threshold);
        cond_rej = cond_rej || cb.rejected;
        sr.comparisons.push_back(cb);
      }
    }
    const bool powered = sr.max_marginal_stderr <= opt.stderr_threshold;
    sr.marginal = marginal_rej ? Verdict::Violated : powered ? Verdict::Consistent : Verdict::Inconclusive;
    sr.conditional = cond_rej ? Verdict::Violated : powered ? Verdict::Consistent : Verdict::Inconclusive;
    sr.verdict = (marginal_rej || cond_rej) ? Verdict::Violated : powered ? Verdict::Consistent : Verdict::Inconclusive;
    any_violated = any_violated || sr.verdict == Verdict::Violated;
    all_consistent = all_consistent && sr.verdict == Verdict::Consistent;
    rep.starts.push_back(std::move(sr));
  }
  rep.verdict = any_violated ? Verdict::Violated : all_consistent ? Verdict::Consistent : Verdict::Inconclusive;
  return rep;
}

}  // namespace

MartingaleReport check_supermartingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                       const MartingaleOptions& opt) {
  return run_check(MartingaleKind::Super, p, u, starts, opt);
}

MartingaleReport check_submartingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                     const MartingaleOptions& opt) {
  return run_check(MartingaleKind::Sub, p, u, starts, opt);
}

MartingaleReport check_martingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                  const MartingaleOptions& opt) {
  return run_check(MartingaleKind::Martingale, p, u, starts, opt);
}

ViscosityReport check_viscosity(const GridFn& u, const Problem& p, ViscosityKind kind, double tol) {
  const Grid& g = *u.grid;
  ViscosityReport rep;
  rep.kind = kind;
  rep.tol = tol;
  rep.caveat =
      "finite-difference residuals probe smooth points only; they are a necessary-condition proxy for the "
      "viscosity property and certify nothing at kinks";
  rep.residual = discrete_residual(p, u);
  const int K = g.nt() - 1;
  rep.terminal_slack.resize(g.space_size());
  Eigen::VectorXd x(g.dim());
  const double sign = kind == ViscosityKind::Super ? 1.0 : -1.0;
  double worst = 0.0;
  auto consider = [&](double excess, int k, int s) {
    if (excess > worst) {
      worst = excess;
      rep.worst_k = k;
      rep.worst_s = s;
      rep.worst_value = excess;
    }
  };
  for (int k = 0; k < K; ++k)
    for (int s = 0; s < g.space_size(); ++s) {
      if (g.on_space_boundary(s)) continue;
      // super: residual >= -tol; sub: residual <= tol
      double excess = -sign * rep.residual(k, s) - tol;
      if (excess > 0) {
        ++rep.residual_violations;
        consider(excess, k, s);
      }
    }
  for (int s = 0; s < g.space_size(); ++s) {
    g.point(s, x.data());
    rep.terminal_slack(s) = u.values(K, s) - p.g()(g.t(K), x);
    double excess = -sign * rep.terminal_slack(s) - tol;
    if (excess > 0) {
      ++rep.terminal_violations;
      consider(excess, K, s);
    }
  }
  rep.passed = rep.residual_violations == 0 && rep.terminal_violations == 0;
  return rep;
}

SandwichReport check_sandwich(const GridFn& lower, const GridFn& mc, const GridFn& mc_stderr, const GridFn& upper,
                              const SlackRule& rule, const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask) {
  const long nt = mc.values.rows();
  const long ns = mc.values.cols();
  for (const GridFn* f : {&lower, &mc_stderr, &upper})
    if (f->values.rows() != nt || f->values.cols() != ns) throw std::invalid_argument("sandwich inputs must share a grid");
  if (mask && (mask->rows() != nt || mask->cols() != ns)) throw std::invalid_argument("mask shape mismatch");
  SandwichReport rep;
  rep.rule = rule;
  for (long k = 0; k < nt; ++k)
    for (long s = 0; s < ns; ++s) {
      if (mask && !(*mask)(k, s)) {
        ++rep.skipped;
        continue;
      }
      ++rep.checked;
      const double slack = rule.stderr_multiplier * mc_stderr.values(k, s) + rule.allowance;
      const double lo = lower.values(k, s) - (mc.values(k, s) + slack);
      if (lo > 0) rep.violations.push_back({static_cast<int>(k), static_cast<int>(s), true, lo});
      const double hi = (mc.values(k, s) - slack) - upper.values(k, s);
      if (hi > 0) rep.violations.push_back({static_cast<int>(k), static_cast<int>(s), false, hi});
    }
  return rep;
}

}  // namespace perronlab
