#include <doctest.h>

#include <cmath>

#include "perronlab/montecarlo.hpp"
#include "perronlab/perron.hpp"

using namespace perronlab;

namespace {

Problem heat(double lo = -8, double hi = 8, const char* sigma = "1") {
  return Problem::create(spec_1d("0", sigma, "tanh(x1)", 1.0, lo, hi, -1, 1));
}
std::shared_ptr<const Grid> grid(const Problem& p, int nt, int nx) {
  return std::make_shared<const Grid>(Grid::uniform(p, nt, nx));
}

PerronOptions cold(double tol = 0.05, int budget = 5000) {
  PerronOptions o;
  o.tol = tol;
  o.budget = budget;
  o.warm_start = false;
  return o;
}

}  // namespace

TEST_CASE("admission of smooth candidates") {
  Problem p = heat();
  auto g = grid(p, 6, 17);
  CandidateSupersolution c = admit_candidate(p, *g, parse("1", 1), 1e-9);
  CHECK(c.admitted);
  CHECK(c.residual_min == 0.0);
  CHECK(c.terminal_slack_min >= 0.0);
  Problem low = Problem::create(spec_1d("0", "1", "-2", 1.0, -8, 8, -2, -2));
  CHECK(admit_candidate(low, *grid(low, 6, 17), parse("-t", 1), 1e-9).admitted);
  CandidateSupersolution r = admit_candidate(p, *g, parse("-t", 1), 1e-9);
  CHECK_FALSE(r.admitted);
  CHECK(r.terminal_slack_min < 0);
  CHECK(r.residual_min == doctest::Approx(1.0));
  CandidateSupersolution neg = admit_candidate(p, *g, parse("1 + (-0.5)*(1-t)", 1), 1e-9);
  CHECK_FALSE(neg.admitted);
  CHECK(neg.residual_min == doctest::Approx(-0.5));
  CHECK_THROWS(admit_candidate(p, *g, parse("abs(x1)", 1), 1e-9));
}

TEST_CASE("envelopes of explicit families") {
  Problem p = Problem::create(spec_1d("0", "1", "3", 1.0, -2, 2, 3, 3));
  auto g = grid(p, 6, 9);
  PerronState st = initial_state(p, g, cold());
  CHECK(st.family.size() == 1);
  CHECK((st.envelope.values.array() == 3.0).all());
  Problem q = Problem::create(spec_1d("0", "1", "3", 1.0, -2, 2, 3, 5));
  PerronState s2 = initial_state(q, g, cold());
  s2.family.push_back(admit_candidate(q, *g, parse("3 + (1 - t)", 1), 1e-9));
  GridFn env = build_envelope(q, s2);
  CHECK(env.tag == Regularity::USC);
  for (int k = 0; k < g->nt(); ++k)
    for (int s = 1; s + 1 < g->space_size(); ++s) CHECK(env(k, s) == std::min(5.0, 3.0 + (1.0 - g->t(k))));
  CHECK(s2.selected >= 1);
  // lateral boundary carries the Dirichlet data g
  CHECK(env(0, 0) == 3.0);
}

TEST_CASE("constant envelope: interior residual vanishes away from the boundary") {
  Problem p = heat();
  auto g = grid(p, 6, 17);
  PerronState st = initial_state(p, g, cold());
  Eigen::MatrixXd r = discrete_residual(st.table, st.envelope);
  for (int k = 0; k + 1 < g->nt(); ++k)
    for (int s = 2; s + 2 < g->space_size(); ++s) CHECK(r(k, s) == 0.0);
  CHECK(st.max_terminal_excess == doctest::Approx(1.0 - std::tanh(g->point(1)(0))));
}

TEST_CASE("bump on a synthetic envelope") {
  Problem p = heat(-4, 4);
  auto g = grid(p, 11, 33);
  PerronState st = initial_state(p, g, cold());
  // smooth bump 0.3 (T - t) (1 - ((x - x0) / w)^2)^+ on top of a level profile
  const double x0 = 0.5, w = 1.5;
  for (int k = 0; k < g->nt(); ++k)
    for (int s = 0; s < g->space_size(); ++s) {
      double z = (g->point(s)(0) - x0) / w;
      st.envelope(k, s) = 0.2 + 0.3 * (1.0 - g->t(k)) * std::max(0.0, 1.0 - z * z);
    }
  Eigen::MatrixXd r = discrete_residual(st.table, st.envelope);
  BumpOutcome o = bump_step(st, p, cold(0.05));
  REQUIRE(o.status == BumpStatus::Applied);
  CHECK(std::fabs(g->point(o.record.s)(0) - x0) < w);
  CHECK(o.record.excess == r(o.record.k, o.record.s));
  CHECK(o.record.decrease == doctest::Approx(o.record.eta).epsilon(1e-9));
  CHECK(o.record.eta < o.record.delta);
  CHECK(o.record.delta > 0);
  CHECK(st.family.back().local());
  CHECK(st.family.back().residual_min > 0);
}

TEST_CASE("no-op on a converged state") {
  Problem p = Problem::create(spec_1d("0", "1", "0.25", 1.0, -2, 2, 0.25, 0.25));
  auto g = grid(p, 5, 9);
  PerronState st = initial_state(p, g, cold());
  CHECK(bump_step(st, p, cold()).status == BumpStatus::NoViolation);
  CHECK(terminal_bump(st, p, cold()).status == BumpStatus::NoViolation);
  PerronPair pp = perron_both(p, g, cold());
  CHECK(pp.upper.converged);
  CHECK(pp.upper.bumps == 0);
  CHECK((pp.upper.envelope.values.array() == 0.25).all());
  CHECK((pp.lower.envelope.values.array() == 0.25).all());
}

TEST_CASE("terminal bump lowers the terminal excess") {
  Problem p = heat();
  auto g = grid(p, 6, 17);
  PerronState st = initial_state(p, g, cold());
  const int K = g->nt() - 1;
  BumpOutcome o = terminal_bump(st, p, cold());
  REQUIRE(o.status == BumpStatus::Applied);
  CHECK(o.record.k == K);
  CHECK(o.record.s == 1);  // the -8 side has the largest excess
  CHECK(o.record.decrease == doctest::Approx(o.record.delta));
  for (int s = 0; s < g->space_size(); ++s) CHECK(st.envelope(K, s) >= st.payoff(s));
  // a stronger diffusion needs a larger k
  Problem hot = heat(-8, 8, "3");
  PerronState s3 = initial_state(hot, g, cold());
  BumpOutcome h = terminal_bump(s3, hot, cold());
  REQUIRE(h.status == BumpStatus::Applied);
  CHECK(h.record.doublings > 0);
  CHECK(h.record.mu == std::ldexp(1.0, h.record.doublings));
}

TEST_CASE("deterministic problem converges to the frozen payoff") {
  Problem p = Problem::create(spec_1d("0", "0", "x1^2", 1.0, -2, 2, 0, 4));
  auto g = grid(p, 6, 17);
  const double tol = 0.05;
  for (bool warm : {true, false}) {
    PerronOptions o = cold(tol);
    o.warm_start = warm;
    PerronState st = perron_iterate(p, g, o);
    CHECK(st.converged);
    double err = 0.0;
    for (int k = 0; k < g->nt(); ++k)
      for (int s = 0; s < g->space_size(); ++s) err = std::max(err, std::fabs(st.envelope(k, s) - st.payoff(s)));
    // a residual of at most tol per unit time plus the terminal excess
    // integrate to tol (1 + T); the warm start is exact here
    CHECK(err <= (warm ? 0.0 : tol * 2.0));
  }
}

TEST_CASE("iteration invariants on the heat benchmark") {
  Problem p = heat();
  auto g = grid(p, 6, 17);
  PerronOptions o = cold(0.05, 150);
  PerronState st = perron_iterate(p, g, o);
  CHECK(st.bumps == static_cast<int>(st.log.size()));
  for (const auto& r : st.log) CHECK(r.decrease > 0);
  for (const auto& c : st.family) {
    CHECK(c.admitted);
    if (!c.local()) continue;
    SmoothFn sf(c.expr);
    for (long n : c.support) {
      int k = static_cast<int>(n / g->space_size()), s = static_cast<int>(n % g->space_size());
      CHECK(apply_generator(p, sf, g->t(k), g->point(s)).residual > 0);
    }
  }
  CHECK(build_envelope(p, st).values == st.envelope.values);
  const int K = g->nt() - 1;
  for (int s = 0; s < g->space_size(); ++s) CHECK(st.envelope(K, s) >= st.payoff(s) - o.tol_admit);
  // duality with the negated payoff
  PerronState lo = perron_lower(p, g, o);
  PerronState up_neg = perron_iterate(p.negated_payoff(), g, o);
  CHECK(lo.envelope.values == -up_neg.envelope.values);
}

TEST_CASE("monotone envelope sequence and MC guard") {
  Problem p = heat();
  auto g = grid(p, 6, 17);
  PerronOptions o = cold(0.05, 40);
  PerronState st = initial_state(p, g, o);
  Eigen::MatrixXd prev = st.envelope.values;
  for (int i = 0; i < 40; ++i) {
    BumpOutcome t = terminal_bump(st, p, o);
    if (t.status == BumpStatus::NoViolation && bump_step(st, p, o).status == BumpStatus::NoViolation) break;
    CHECK((st.envelope.values.array() <= prev.array()).all());
    prev = st.envelope.values;
  }
  GridEstimate mc = estimate_grid(p, g, 2000, 10, 3);
  o.mc = &mc;
  PerronPair pp = perron_both(p, g, o);
  for (int k = 0; k < g->nt(); ++k)
    for (int s = 1; s + 1 < g->space_size(); ++s) {
      CHECK(pp.upper.envelope(k, s) >= mc.value(k, s) - 3 * mc.stderr_(k, s));
      CHECK(pp.lower.envelope(k, s) <= mc.value(k, s) + 3 * mc.stderr_(k, s));
    }
}

TEST_CASE("default tolerance") {
  Problem p = heat();
  Grid g = Grid::uniform(p, 11, 17);
  CHECK(default_tolerance(g) == doctest::Approx(5 * (0.1 + 1.0)));
}
