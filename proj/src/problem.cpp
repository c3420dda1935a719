#include "perronlab/problem.hpp"

#include <cmath>
#include <sstream>

namespace perronlab {

const char* truncation_caveat() {
  return "numerical domain truncated to the declared box; truncation error is not quantified";
}

ProblemSpec spec_1d(const std::string& drift, const std::string& diffusion, const std::string& payoff,
                    double T, double lo, double hi, double g_min, double g_max) {
  ProblemSpec s;
  s.dimension = 1;
  s.brownian_dimension = 1;
  s.horizon = T;
  s.drift = {drift};
  s.diffusion = {{diffusion}};
  s.payoff = payoff;
  s.payoff_min = g_min;
  s.payoff_max = g_max;
  s.box = {{lo, hi}};
  return s;
}

ProblemData parse_problem(const ProblemSpec& spec) {
  if (spec.dimension < 1) throw ConfigError("dimension must be >= 1");
  if (spec.brownian_dimension < 1) throw ConfigError("brownian_dimension must be >= 1");
  if (!std::isfinite(spec.horizon) || spec.horizon <= 0) throw ConfigError("horizon must be finite and > 0");
  const int d = spec.dimension;
  const int dp = spec.brownian_dimension;
  if (static_cast<int>(spec.drift.size()) != d)
    throw ConfigError("drift needs " + std::to_string(d) + " entries, got " + std::to_string(spec.drift.size()));
  if (static_cast<int>(spec.diffusion.size()) != d) throw ConfigError("diffusion needs " + std::to_string(d) + " rows");
  for (const auto& row : spec.diffusion)
    if (static_cast<int>(row.size()) != dp)
      throw ConfigError("each diffusion row needs " + std::to_string(dp) + " entries");
  if (static_cast<int>(spec.box.size()) != d) throw ConfigError("box needs " + std::to_string(d) + " intervals");
  if (!(spec.payoff_min <= spec.payoff_max) || !std::isfinite(spec.payoff_min) || !std::isfinite(spec.payoff_max))
    throw ConfigError("payoff_bounds must be finite with lo <= hi");

  ProblemData p;
  p.d = d;
  p.dprime = dp;
  p.T = spec.horizon;
  p.g_min = spec.payoff_min;
  p.g_max = spec.payoff_max;
  p.lo.resize(d);
  p.hi.resize(d);
  for (int i = 0; i < d; ++i) {
    auto [a, b] = spec.box[i];
    if (!std::isfinite(a) || !std::isfinite(b) || !(a < b))
      throw ConfigError("box interval " + std::to_string(i + 1) + " must be finite with lo < hi");
    p.lo(i) = a;
    p.hi(i) = b;
  }
  for (const auto& s : spec.drift) p.b.push_back(parse(s, d));
  for (const auto& row : spec.diffusion)
    for (const auto& s : row) p.sigma.push_back(parse(s, d));
  p.g = parse(spec.payoff, d);
  if (p.g.depends_on(0)) throw ConfigError("payoff must not depend on t");
  p.source = spec;
  return p;
}

namespace {

double radical_inverse(int base, long i) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

int nth_prime(int n) {
  int count = 0;
  for (int c = 2;; ++c) {
    bool prime = true;
    for (int q = 2; q * q <= c; ++q)
      if (c % q == 0) {
        prime = false;
        break;
      }
    if (prime && count++ == n) return c;
  }
}

std::string where(double t, const Eigen::VectorXd& x) {
  std::ostringstream os;
  os.precision(17);
  os << "(t=" << t;
  for (int i = 0; i < x.size(); ++i) os << ", x" << i + 1 << "=" << x(i);
  os << ")";
  return os.str();
}

}  // namespace

ValidationReport validate(const ProblemData& p, int samples) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  ValidationReport rep;
  rep.samples = samples;
  rep.truncation_caveat = truncation_caveat();
  rep.g_min_seen = std::numeric_limits<double>::infinity();
  rep.g_max_seen = -std::numeric_limits<double>::infinity();

  std::vector<int> bases(p.d + 1);
  for (int j = 0; j <= p.d; ++j) bases[j] = nth_prime(j);

  Eigen::VectorXd x(p.d);
  for (long s = 1; s <= samples; ++s) {
    double t = p.T * radical_inverse(bases[0], s);
    for (int j = 0; j < p.d; ++j) x(j) = p.lo(j) + (p.hi(j) - p.lo(j)) * radical_inverse(bases[j + 1], s);
    double bnorm = 0.0;
    double snorm = 0.0;
    double gx = 0.0;
    try {
      for (const auto& e : p.b) {
        double v = e(t, x);
        bnorm += v * v;
      }
      for (const auto& e : p.sigma) {
        double v = e(t, x);
        snorm += v * v;
      }
      gx = p.g(t, x);
    } catch (const DomainError& err) {
      rep.passed = false;
      rep.coefficients_finite = false;
      rep.failure = std::string("non-finite coefficient at ") + where(t, x) + ": " + err.what();
      return rep;
    }
    double ratio = (std::sqrt(bnorm) + std::sqrt(snorm)) / (1.0 + x.norm());
    rep.growth_constant = std::max(rep.growth_constant, ratio);
    rep.g_min_seen = std::min(rep.g_min_seen, gx);
    rep.g_max_seen = std::max(rep.g_max_seen, gx);
    if ((gx < p.g_min || gx > p.g_max) && rep.g_bounds_ok) {
      rep.g_bounds_ok = false;
      rep.g_bounds_witness = x;
      rep.g_bounds_witness_value = gx;
    }
  }
  if (!rep.g_bounds_ok) {
    rep.passed = false;
    std::ostringstream os;
    os.precision(17);
    os << "payoff value " << rep.g_bounds_witness_value << " outside declared bounds [" << p.g_min << ", "
       << p.g_max << "] at " << where(p.T, *rep.g_bounds_witness);
    rep.failure = os.str();
  }
  return rep;
}

ValidationReport validate(const ProblemSpec& spec, int samples) { return validate(parse_problem(spec), samples); }

Problem Problem::create(const ProblemSpec& spec, int samples) { return create(parse_problem(spec), samples); }

Problem Problem::create(ProblemData data, int samples) {
  ValidationReport rep = validate(data, samples);
  if (!rep.passed) throw ValidationError("problem failed validation: " + rep.failure);
  return Problem(std::move(data), std::move(rep));
}

void Problem::drift(double t, const double* x, double* out) const {
  for (int i = 0; i < data_.d; ++i) out[i] = data_.b[i](t, x);
}

void Problem::diffusion(double t, const double* x, double* out) const {
  const int n = data_.d * data_.dprime;
  for (int i = 0; i < n; ++i) out[i] = data_.sigma[i](t, x);
}

Eigen::MatrixXd Problem::covariance(double t, const Eigen::VectorXd& x) const {
  Eigen::MatrixXd s(data_.d, data_.dprime);
  for (int i = 0; i < data_.d; ++i)
    for (int j = 0; j < data_.dprime; ++j) s(i, j) = data_.sigma_at(i, j)(t, x.data());
  return s * s.transpose();
}

Problem Problem::negated_payoff() const {
  ProblemSpec spec = data_.source;
  spec.payoff = "-(" + spec.payoff + ")";
  spec.payoff_min = -data_.g_max;
  spec.payoff_max = -data_.g_min;
  return create(spec, report_.samples);
}

}  // namespace perronlab
