#include <doctest.h>

#include "perronlab/problem.hpp"

using namespace perronlab;

TEST_CASE("linear growth constant") {
  ValidationReport r = validate(spec_1d("x1", "1", "tanh(x1)", 1.0, -10, 10, -1, 1), 512);
  CHECK(r.passed);
  CHECK(r.growth_constant == doctest::Approx(1.0).epsilon(0.05));
  ValidationReport h = validate(spec_1d("0", "1", "tanh(x1)", 1.0, -10, 10, -1, 1), 512);
  CHECK(h.growth_constant <= 1.0);
  CHECK(h.growth_constant > 0.0);
  CHECK_FALSE(h.truncation_caveat.empty());
}

TEST_CASE("declared payoff bounds are sample-checked") {
  ValidationReport ok = validate(spec_1d("0", "1", "tanh(x1)", 1.0, -8, 8, -1, 1), 256);
  CHECK(ok.g_bounds_ok);
  CHECK(ok.g_min_seen >= -1.0);
  ValidationReport bad = validate(spec_1d("0", "1", "tanh(x1)", 1.0, -8, 8, 0, 1), 256);
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.g_bounds_ok);
  REQUIRE(bad.g_bounds_witness.has_value());
  CHECK((*bad.g_bounds_witness)(0) < 0.0);
  CHECK_THROWS_AS(Problem::create(spec_1d("0", "1", "tanh(x1)", 1.0, -8, 8, 0, 1)), ValidationError);
}

TEST_CASE("non-finite coefficients fail with a location") {
  ValidationReport r = validate(spec_1d("1/(x1-x1)", "1", "0", 1.0, -1, 1, -1, 1), 16);
  CHECK_FALSE(r.passed);
  CHECK_FALSE(r.coefficients_finite);
  CHECK(r.failure.find("x") != std::string::npos);
}

TEST_CASE("validation is deterministic") {
  ProblemSpec s = spec_1d("sin(t*x1)", "1+0.1*tanh(x1)", "tanh(x1)", 1.0, -3, 3, -1, 1);
  ValidationReport a = validate(s, 300), b = validate(s, 300);
  CHECK(a.growth_constant == b.growth_constant);
  CHECK(a.g_max_seen == b.g_max_seen);
}

TEST_CASE("configuration errors") {
  ProblemSpec s = spec_1d("0", "1", "x1", 1.0, -1, 1, -1, 1);
  s.horizon = 0.0;
  CHECK_THROWS_AS(parse_problem(s), ConfigError);
  s = spec_1d("0", "1", "x1", 1.0, 1, -1, -1, 1);
  CHECK_THROWS_AS(parse_problem(s), ConfigError);
  s = spec_1d("0", "1", "x1 + t", 1.0, -1, 1, -2, 2);
  CHECK_THROWS_AS(parse_problem(s), ConfigError);
  s = spec_1d("0", "1", "x2", 1.0, -1, 1, -1, 1);
  CHECK_THROWS_AS(parse_problem(s), ParseError);
  s = spec_1d("0", "1", "x1", 1.0, -1, 1, -1, 1);
  s.drift.push_back("0");
  CHECK_THROWS_AS(parse_problem(s), ConfigError);
}

TEST_CASE("problem accessors and payoff negation") {
  ProblemSpec s;
  s.dimension = 2;
  s.brownian_dimension = 1;
  s.horizon = 2.0;
  s.drift = {"x2", "-x1"};
  s.diffusion = {{"1"}, {"0.5"}};
  s.payoff = "tanh(x1+x2)";
  s.payoff_min = -1;
  s.payoff_max = 1;
  s.box = {{-2, 2}, {-3, 3}};
  Problem p = Problem::create(s);
  double x[2] = {1.0, 2.0}, b[2], sg[2];
  p.drift(0.0, x, b);
  CHECK(b[0] == 2.0);
  CHECK(b[1] == -1.0);
  p.diffusion(0.0, x, sg);
  CHECK(sg[1] == 0.5);
  Eigen::MatrixXd a = p.covariance(0.0, Eigen::Vector2d(1, 2));
  CHECK(a(0, 1) == 0.5);
  CHECK(a(1, 1) == 0.25);
  Problem q = p.negated_payoff();
  CHECK(q.g()(2.0, Eigen::Vector2d(0.3, 0.1)) == -p.g()(2.0, Eigen::Vector2d(0.3, 0.1)));
  CHECK(q.g_min() == -1.0);
}
