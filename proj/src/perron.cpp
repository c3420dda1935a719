#include "perronlab/perron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "perronlab/errors.hpp"

namespace perronlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BallNode {
  int k = 0;
  int s = 0;
  double rho2 = 0.0;
  double tau = 0.0;
  Eigen::VectorXd d;  // x - x0
  bool boundary = false;
  bool terminal = false;
};

// Nodes with (dk)^2 + sum (di_j / R)^2 <= 1: one time cell, R space cells.
std::vector<BallNode> ball(const Grid& g, int k0, int s0, double R) {
  const int d = g.dim();
  const int K = g.nt() - 1;
  const std::vector<int> c = g.unflatten(s0);
  const int r = static_cast<int>(std::floor(R));
  Eigen::VectorXd x0 = g.point(s0);
  std::vector<BallNode> out;
  std::vector<int> idx(d);
  for (int k = std::max(0, k0 - 1); k <= std::min(K, k0 + 1); ++k) {
    // odometer over the space box around c
    for (int j = 0; j < d; ++j) idx[j] = std::max(0, c[j] - r);
    for (;;) {
      double rho2 = static_cast<double>((k - k0) * (k - k0));
      for (int j = 0; j < d; ++j) rho2 += std::pow((idx[j] - c[j]) / R, 2);
      if (rho2 <= 1.0 + 1e-12) {
        BallNode n;
        n.k = k;
        n.s = g.flatten(idx);
        n.rho2 = rho2;
        n.tau = g.t(k) - g.t(k0);
        n.d = g.point(n.s) - x0;
        n.boundary = g.on_space_boundary(n.s);
        n.terminal = k == K;
        out.push_back(std::move(n));
      }
      int j = 0;
      for (; j < d; ++j) {
        if (idx[j] < std::min(g.nx(j) - 1, c[j] + r)) {
          ++idx[j];
          break;
        }
        idx[j] = std::max(0, c[j] - r);
      }
      if (j == d) break;
    }
  }
  return out;
}

bool in_list(const std::vector<long>& v, long n) { return std::find(v.begin(), v.end(), n) != v.end(); }

struct Coeffs {
  Eigen::VectorXd b;
  double tr = 0.0;
};

Coeffs coeffs(const CoefficientTable& t, int k, int s) {
  const int d = t.grid->dim();
  const long r = static_cast<long>(k) * t.grid->space_size() + s;
  Coeffs c;
  c.b = t.b.row(r).transpose();
  for (int j = 0; j < d; ++j) c.tr += t.a(r, j * d + j);
  return c;
}

// phi = E0 + a (t - t0) + p.(x - x0) + lam/2 |x - x0|^2 + mu/2 (t - t0)^2 - shift
Expr quadratic(double E0, double t0, const Eigen::VectorXd& x0, double a, const Eigen::VectorXd& p, double lam,
               double mu, double shift) {
  using namespace build;
  const int d = static_cast<int>(x0.size());
  Expr tau = sub(time(d), num(t0, d));
  Expr e = add(num(E0 - shift, d), mul(num(a, d), tau));
  Expr sq = num(0.0, d);
  for (int j = 0; j < d; ++j) {
    Expr dj = sub(var(j, d), num(x0(j), d));
    e = add(e, mul(num(p(j), d), dj));
    sq = add(sq, mul(dj, dj));
  }
  e = add(e, mul(num(0.5 * lam, d), sq));
  e = add(e, mul(num(0.5 * mu, d), mul(tau, tau)));
  return e;
}

// phi = E0 + |x - x0|^2 / w + kk (T - t) - shift
Expr paraboloid(double E0, double T, const Eigen::VectorXd& x0, double w, double kk, double shift) {
  using namespace build;
  const int d = static_cast<int>(x0.size());
  Expr sq = num(0.0, d);
  for (int j = 0; j < d; ++j) {
    Expr dj = sub(var(j, d), num(x0(j), d));
    sq = add(sq, mul(dj, dj));
  }
  Expr e = add(num(E0 - shift, d), div(sq, num(w, d)));
  return add(e, mul(num(kk, d), sub(num(T, d), time(d))));
}

BumpOutcome skipped(BumpRecord rec, std::string why) {
  BumpOutcome o;
  o.status = BumpStatus::Skipped;
  o.record = std::move(rec);
  o.reason = std::move(why);
  return o;
}

// Shared tail of both bump kinds: verify, patch, append the member.
bool try_patch(PerronState& st, const Problem& p, const std::vector<BallNode>& nodes, const Expr& phi,
               const PerronOptions& opt, BumpRecord& rec, std::string& why) {
  const Grid& g = *st.grid;
  Eigen::MatrixXd& E = st.envelope.values;
  SmoothFn sf(phi);
  double rmin = kInf;
  double slack = kInf;
  std::vector<double> vals(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const BallNode& n = nodes[i];
    Eigen::VectorXd x = g.point(n.s);
    vals[i] = phi(g.t(n.k), x);
    if (n.boundary || n.terminal) {
      if (vals[i] < st.payoff(n.s)) {
        why = "patch would fall below g on the boundary";
        return false;
      }
      if (n.terminal && !n.boundary) slack = std::min(slack, vals[i] - st.payoff(n.s));
    }
    if (n.boundary) continue;
    double r = apply_generator(p, sf, g.t(n.k), x).residual;
    rmin = std::min(rmin, r);
    if (!(r > 0.0)) {
      why = "local residual check failed";
      return false;
    }
    if (opt.mc) {
      const GridEstimate& mc = *opt.mc;
      if (mc.valid(n.k, n.s)) {
        double floor_ = mc.value(n.k, n.s) - opt.mc_multiplier * mc.stderr_(n.k, n.s);
        if (std::min(E(n.k, n.s), vals[i]) < floor_) {
          why = "patch would cross the Monte Carlo band";
          return false;
        }
      }
    }
  }
  CandidateSupersolution c;
  c.expr = phi;
  c.origin = rec.kind == BumpKind::Interior ? "interior bump" : "terminal bump";
  const int ns = g.space_size();
  const double before = E(rec.k, rec.s);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const BallNode& n = nodes[i];
    if (n.boundary) continue;
    c.support.push_back(static_cast<long>(n.k) * ns + n.s);
    E(n.k, n.s) = std::min(E(n.k, n.s), vals[i]);
  }
  std::sort(c.support.begin(), c.support.end());
  c.residual_min = rmin;
  c.terminal_slack_min = slack == kInf ? 0.0 : slack;
  c.admitted = true;
  st.family.push_back(std::move(c));
  rec.decrease = before - E(rec.k, rec.s);
  rec.nodes = static_cast<int>(st.family.back().support.size());
  return true;
}

void record(PerronState& st, BumpRecord& rec) {
  rec.iteration = st.bumps;
  ++st.bumps;
  if (rec.kind == BumpKind::Interior) ++st.interior_bumps;
  else ++st.terminal_bumps;
  st.skipped.clear();
  st.terminal_skipped.clear();
  st.log.push_back(rec);
}

}  // namespace

const char* to_string(PerronStatus s) {
  switch (s) {
    case PerronStatus::Converged: return "converged";
    case PerronStatus::Stalled: return "stalled";
    default: return "budget_exhausted";
  }
}

double default_tolerance(const Grid& g, double scheme_constant) {
  double dt = 0.0;
  for (int k = 0; k + 1 < g.nt(); ++k) dt = std::max(dt, g.t(k + 1) - g.t(k));
  double dx = 0.0;
  for (int j = 0; j < g.dim(); ++j)
    for (int i = 0; i + 1 < g.nx(j); ++i) dx = std::max(dx, g.space(j)(i + 1) - g.space(j)(i));
  return 5.0 * (dt + dx * dx) * scheme_constant;
}

CandidateSupersolution admit_candidate(const Problem& p, const Grid& grid, const Expr& e, double tol_admit,
                                       std::string origin) {
  SmoothFn sf(e);
  CandidateSupersolution c;
  c.expr = e;
  c.origin = origin.empty() ? print(e) : std::move(origin);
  c.residual_min = kInf;
  c.terminal_slack_min = kInf;
  const int K = grid.nt() - 1;
  for (int k = 0; k <= K; ++k)
    for (int s = 0; s < grid.space_size(); ++s) {
      Eigen::VectorXd x = grid.point(s);
      if (k == K) {
        c.terminal_slack_min = std::min(c.terminal_slack_min, e(grid.t(K), x) - p.g()(grid.t(K), x));
      } else if (residual_node(grid, k, s)) {
        c.residual_min = std::min(c.residual_min, apply_generator(p, sf, grid.t(k), x).residual);
      }
    }
  c.admitted = c.residual_min >= -tol_admit && c.terminal_slack_min >= -tol_admit;
  return c;
}

GridFn evaluate_member(const Problem& p, std::shared_ptr<const Grid> grid, const CandidateSupersolution& c) {
  const Grid& g = *grid;
  const int ns = g.space_size();
  Eigen::MatrixXd v(g.nt(), ns);
  Eigen::VectorXd x(g.dim());
  const double T = g.t(g.nt() - 1);
  if (c.local()) v.setConstant(p.g_max());
  for (int k = 0; k < g.nt(); ++k)
    for (int s = 0; s < ns; ++s) {
      g.point(s, x.data());
      if (g.on_space_boundary(s)) v(k, s) = p.g()(T, x);
      else if (!c.local()) v(k, s) = c.expr(g.t(k), x);
    }
  for (long n : c.support) {
    const int k = static_cast<int>(n / ns);
    const int s = static_cast<int>(n % ns);
    g.point(s, x.data());
    v(k, s) = std::min(p.g_max(), c.expr(g.t(k), x));
  }
  return GridFn(std::move(grid), std::move(v), Regularity::Continuous);
}

void refresh_diagnostics(PerronState& st) {
  const Grid& g = *st.grid;
  const int K = g.nt() - 1;
  Eigen::MatrixXd r = discrete_residual(st.table, st.envelope);
  st.max_residual = -kInf;
  st.min_residual = kInf;
  for (int k = 0; k < K; ++k)
    for (int s = 0; s < g.space_size(); ++s)
      if (residual_node(g, k, s)) {
        st.max_residual = std::max(st.max_residual, r(k, s));
        st.min_residual = std::min(st.min_residual, r(k, s));
      }
  st.max_terminal_excess = -kInf;
  for (int s = 0; s < g.space_size(); ++s)
    if (!g.on_space_boundary(s)) st.max_terminal_excess = std::max(st.max_terminal_excess, st.envelope(K, s) - st.payoff(s));
}

PerronState initial_state(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt) {
  PerronState st;
  st.grid = grid;
  st.table = tabulate(p, grid);
  const Grid& g = *grid;
  const int d = g.dim();
  const double T = g.t(g.nt() - 1);
  st.payoff.resize(g.space_size());
  for (int s = 0; s < g.space_size(); ++s) st.payoff(s) = p.g()(T, g.point(s));

  st.family.push_back(admit_candidate(p, g, build::num(p.g_max(), d), opt.tol_admit, "constant g_max"));
  if (opt.warm_start && p.g().smooth()) {
    // g + c (T - t) with c = max (L_t g)^+ has residual c - L_t g >= 0.
    SmoothFn sg(p.g());
    double c = 0.0;
    for (int k = 0; k + 1 < g.nt(); ++k)
      for (int s = 0; s < g.space_size(); ++s)
        if (residual_node(g, k, s)) {
          GeneratorEval ev = apply_generator(p, sg, g.t(k), g.point(s));
          c = std::max(c, ev.drift + ev.diffusion);
        }
    using namespace build;
    Expr e = add(p.g(), mul(num(c, d), sub(num(T, d), time(d))));
    CandidateSupersolution w = admit_candidate(p, g, e, opt.tol_admit, "payoff plus drift");
    if (w.admitted) st.family.push_back(std::move(w));
  }

  Eigen::MatrixXd v = evaluate_member(p, grid, st.family.front()).values;
  for (std::size_t i = 1; i < st.family.size(); ++i) v = v.cwiseMin(evaluate_member(p, grid, st.family[i]).values);
  st.envelope = GridFn(grid, std::move(v), Regularity::USC);
  refresh_diagnostics(st);
  return st;
}

GridFn build_envelope(const Problem& p, PerronState& st) {
  FnFamily fam;
  fam.label = "admitted supersolutions";
  for (const auto& c : st.family)
    if (c.admitted) fam.members.push_back(evaluate_member(p, st.grid, c));
  if (fam.members.empty()) throw std::logic_error("family has no admitted member");
  Selection sel = countable_selection(fam);
  st.selected = static_cast<int>(sel.indices.size());
  Eigen::MatrixXd v = fam.members[sel.indices.front()].values;
  for (std::size_t i = 1; i < sel.indices.size(); ++i) v = v.cwiseMin(fam.members[sel.indices[i]].values);
  return GridFn(st.grid, std::move(v), Regularity::USC);
}

BumpOutcome bump_at(PerronState& st, const Problem& p, int k0, int s0, const PerronOptions& opt) {
  const Grid& g = *st.grid;
  const int d = g.dim();
  const Eigen::MatrixXd& E = st.envelope.values;
  BumpRecord rec;
  rec.kind = BumpKind::Interior;
  rec.k = k0;
  rec.s = s0;
  if (!residual_node(g, k0, s0)) return skipped(rec, "not a residual node");
  rec.excess = discrete_residual_at(st.table, E, k0, s0);
  if (!(rec.excess > 0.0)) return skipped(rec, "residual is not positive");

  const double E0 = E(k0, s0);
  const double t0 = g.t(k0);
  const double dt = g.t(k0 + 1) - t0;
  const Eigen::VectorXd x0 = g.point(s0);
  const double a = (E(k0 + 1, s0) - E0) / dt;
  Eigen::VectorXd grad(d);
  double D2 = -kInf;
  double hmax = 0.0;
  const std::vector<int> c = g.unflatten(s0);
  for (int j = 0; j < d; ++j) {
    const int st_ = g.stride(j);
    const double hm = x0(j) - g.space(j)(c[j] - 1);
    const double hp = g.space(j)(c[j] + 1) - x0(j);
    const double Em = E(k0, s0 - st_), Ep = E(k0, s0 + st_);
    grad(j) = (Ep - Em) / (hp + hm);
    D2 = std::max(D2, 2.0 * ((Ep - E0) / hp - (E0 - Em) / hm) / (hp + hm));
    hmax = std::max(hmax, std::max(hm, hp));
  }
  const Coeffs c0 = coeffs(st.table, k0, s0);
  std::string why = "no admissible radius";

  for (double R = opt.eps_cells; R >= 1.0; R *= 0.5) {
    ++rec.attempts;
    std::vector<BallNode> nodes = ball(g, k0, s0, R);
    // Hessian majorant: local second differences and same-level domination.
    double lam = D2;
    for (const BallNode& n : nodes)
      if (n.k == k0 && n.s != s0) {
        double d2 = n.d.squaredNorm();
        lam = std::max(lam, 2.0 * (E(n.k, n.s) - E0 - grad.dot(n.d)) / d2);
      }
    const double h = std::max(R / 2.0, 1.0) * hmax;
    const double rho0 = -a - c0.b.dot(grad) - 0.5 * c0.tr * lam;
    const double margin = rho0 * dt / (h * h + 0.5 * c0.tr * dt);
    if (!(margin > 0.0)) {
      why = "no curvature margin";
      continue;
    }
    lam += margin;

    // mu: residual positive at every ball node, phi above E off the centre level.
    double lo = -kInf, hi = kInf;
    bool ok = true;
    for (const BallNode& n : nodes) {
      if (n.boundary) continue;
      const Coeffs cn = coeffs(st.table, n.k, n.s);
      const double cres = -a - cn.b.dot(grad + lam * n.d) - 0.5 * cn.tr * lam;
      if (n.tau == 0.0) {
        if (!(cres > 0.0)) ok = false;
      } else if (n.tau > 0.0) {
        hi = std::min(hi, cres / n.tau);
      } else {
        lo = std::max(lo, cres / n.tau);
      }
    }
    for (const BallNode& n : nodes)
      if (n.k != k0) {
        const double q = E0 + a * n.tau + grad.dot(n.d) + 0.5 * lam * n.d.squaredNorm();
        lo = std::max(lo, 2.0 * (E(n.k, n.s) - q) / (n.tau * n.tau));
      }
    if (!ok || !(lo < hi)) {
      why = "empty time-curvature interval";
      continue;
    }
    double mu;
    if (std::isfinite(hi) && std::isfinite(lo)) mu = lo + opt.kappa * (hi - lo);
    else if (std::isfinite(lo)) mu = lo + 1.0;
    else mu = hi - 1.0;

    Expr phi = quadratic(E0, t0, x0, a, grad, lam, mu, 0.0);
    double delta = kInf;
    for (const BallNode& n : nodes)
      if (n.rho2 >= 0.25 - 1e-12) delta = std::min(delta, phi(g.t(n.k), g.point(n.s)) - E(n.k, n.s));
    if (!(delta > opt.min_progress * rec.excess * dt)) {
      why = "shell gap below minimum progress";
      continue;
    }
    const double eta = opt.eta_fraction * delta;
    Expr phi_eta = quadratic(E0, t0, x0, a, grad, lam, mu, eta);
    rec.radius = R;
    rec.eta = eta;
    rec.delta = delta;
    rec.lambda = lam;
    rec.mu = mu;
    if (!try_patch(st, p, nodes, phi_eta, opt, rec, why)) continue;
    record(st, rec);
    BumpOutcome o;
    o.status = BumpStatus::Applied;
    o.record = rec;
    return o;
  }
  return skipped(rec, why);
}

BumpOutcome bump_step(PerronState& st, const Problem& p, const PerronOptions& opt) {
  const Grid& g = *st.grid;
  const int ns = g.space_size();
  Eigen::MatrixXd r = discrete_residual(st.table, st.envelope);
  double best = -kInf;
  int bk = -1, bs = -1;
  for (int k = 0; k + 1 < g.nt(); ++k)
    for (int s = 0; s < ns; ++s) {
      if (!residual_node(g, k, s)) continue;
      if (in_list(st.skipped, static_cast<long>(k) * ns + s)) continue;
      if (r(k, s) > best) {
        best = r(k, s);
        bk = k;
        bs = s;
      }
    }
  if (bk < 0 || !(best > opt.tol)) return BumpOutcome{};
  BumpOutcome o = bump_at(st, p, bk, bs, opt);
  if (o.status == BumpStatus::Skipped) {
    st.skipped.push_back(static_cast<long>(bk) * ns + bs);
    ++st.skips;
  }
  return o;
}

BumpOutcome terminal_bump(PerronState& st, const Problem& p, const PerronOptions& opt) {
  const Grid& g = *st.grid;
  const int K = g.nt() - 1;
  const double ttol = opt.terminal_tol < 0 ? opt.tol : opt.terminal_tol;
  const Eigen::MatrixXd& E = st.envelope.values;
  double best = -kInf;
  int s0 = -1;
  for (int s = 0; s < g.space_size(); ++s) {
    if (g.on_space_boundary(s) || in_list(st.terminal_skipped, s)) continue;
    double ex = E(K, s) - st.payoff(s);
    if (ex > best) {
      best = ex;
      s0 = s;
    }
  }
  if (s0 < 0 || !(best > ttol)) return BumpOutcome{};

  BumpRecord rec;
  rec.kind = BumpKind::Terminal;
  rec.k = K;
  rec.s = s0;
  rec.excess = best;
  const double E0 = E(K, s0);
  const double T = g.t(K);
  const Eigen::VectorXd x0 = g.point(s0);
  std::string why = "no admissible radius";

  for (double R = opt.eps_cells; R >= 0.5; R *= 0.5) {
    ++rec.attempts;
    std::vector<BallNode> nodes = ball(g, K, s0, R);
    double gmax = -kInf;
    for (const BallNode& n : nodes)
      if (n.terminal) gmax = std::max(gmax, st.payoff(n.s));
    const double gamma = E0 - gmax;
    if (!(gamma > 0.5 * best)) {
      why = "payoff rises too fast inside the ball";
      continue;
    }
    // Width so that the paraboloid clears the envelope by gamma on the shell.
    double w = kInf;
    for (const BallNode& n : nodes)
      if (n.rho2 >= 0.25 - 1e-12) {
        const double d2 = n.d.squaredNorm();
        const double req = E(n.k, n.s) + gamma - E0;
        if (req > 0 && d2 > 0) w = std::min(w, d2 / req);
      }
    if (!std::isfinite(w)) w = 1e9;
    double kk = 1.0;
    int doublings = 0;
    auto good = [&](double kv) {
      for (const BallNode& n : nodes) {
        if (n.boundary) continue;
        const Coeffs cn = coeffs(st.table, n.k, n.s);
        const double res = kv - cn.b.dot(2.0 * n.d / w) - cn.tr / w;
        if (!(res > 0.0)) return false;
        if (n.rho2 >= 0.25 - 1e-12) {
          const double phi = E0 + n.d.squaredNorm() / w + kv * (T - g.t(n.k));
          if (phi < E(n.k, n.s) + 0.999 * gamma) return false;
        }
      }
      return true;
    };
    while (!good(kk) && doublings < 200) {
      kk *= 2.0;
      ++doublings;
    }
    if (doublings >= 200) {
      why = "k doubling did not reach a supersolution";
      continue;
    }
    const double delta = 0.5 * gamma;
    Expr phi = paraboloid(E0, T, x0, w, kk, delta);
    rec.radius = R;
    rec.eta = w;
    rec.delta = delta;
    rec.lambda = 2.0 / w;
    rec.mu = kk;
    rec.doublings = doublings;
    if (!try_patch(st, p, nodes, phi, opt, rec, why)) continue;
    record(st, rec);
    BumpOutcome o;
    o.status = BumpStatus::Applied;
    o.record = rec;
    return o;
  }
  st.terminal_skipped.push_back(s0);
  ++st.skips;
  return skipped(rec, why);
}

PerronState perron_iterate(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt) {
  if (opt.budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (!(opt.eta_fraction > 0.0 && opt.eta_fraction < 1.0)) throw std::invalid_argument("eta fraction must lie in (0, 1)");
  PerronState st = initial_state(p, grid, opt);
  while (st.bumps < opt.budget) {
    BumpOutcome t = terminal_bump(st, p, opt);
    if (t.status != BumpStatus::NoViolation) continue;
    BumpOutcome o = bump_step(st, p, opt);
    if (o.status == BumpStatus::NoViolation) break;
  }
  GridFn env = build_envelope(p, st);
  if (env.values != st.envelope.values) throw std::logic_error("envelope differs from the infimum over its family");
  refresh_diagnostics(st);
  const double ttol = opt.terminal_tol < 0 ? opt.tol : opt.terminal_tol;
  st.converged = st.max_residual <= opt.tol && st.max_terminal_excess <= ttol;
  st.status = st.converged ? PerronStatus::Converged
              : st.bumps >= opt.budget ? PerronStatus::BudgetExhausted
                                       : PerronStatus::Stalled;
  return st;
}

PerronState perron_lower(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt) {
  Problem q = p.negated_payoff();
  PerronOptions o = opt;
  GridEstimate mirrored;
  if (opt.mc) {
    mirrored = *opt.mc;
    mirrored.value = -opt.mc->value;
    o.mc = &mirrored;
  }
  PerronState st = perron_iterate(q, grid, o);
  st.envelope = -st.envelope;
  st.payoff = -st.payoff;
  return st;
}

PerronPair perron_both(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt) {
  PerronPair out;
  out.upper = perron_iterate(p, grid, opt);
  out.lower = perron_lower(p, grid, opt);
  out.max_gap = (out.upper.envelope.values - out.lower.envelope.values).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace perronlab
