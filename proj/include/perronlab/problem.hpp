#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/expr.hpp"

namespace perronlab {

/// Raw problem description as it appears in a config file.
struct ProblemSpec {
  int dimension = 1;
  int brownian_dimension = 1;
  double horizon = 1.0;
  std::vector<std::string> drift;                  // d entries
  std::vector<std::vector<std::string>> diffusion;  // d rows of d' entries
  std::string payoff;
  double payoff_min = -1.0;
  double payoff_max = 1.0;
  std::vector<std::pair<double, double>> box;  // d intervals
};

/// Parsed coefficients; may still fail validation.
struct ProblemData {
  int d = 1;
  int dprime = 1;
  double T = 1.0;
  std::vector<Expr> b;      // d
  std::vector<Expr> sigma;  // d x d', row major
  Expr g;
  double g_min = -1.0;
  double g_max = 1.0;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  ProblemSpec source;

  const Expr& sigma_at(int i, int j) const { return sigma[i * dprime + j]; }
};

/// Parse every expression and check shapes. Throws ParseError or ConfigError.
ProblemData parse_problem(const ProblemSpec& spec);

struct ValidationReport {
  bool passed = true;
  int samples = 0;
  double growth_constant = 0.0;  // max (|b|_2 + |sigma|_F) / (1 + |x|_2)
  double g_min_seen = 0.0;
  double g_max_seen = 0.0;
  bool g_bounds_ok = true;
  std::optional<Eigen::VectorXd> g_bounds_witness;
  double g_bounds_witness_value = 0.0;
  bool coefficients_finite = true;
  std::string failure;  // first failure, with location
  std::string truncation_caveat;
};

/// Deterministic Halton sampling of [0,T] x box.
ValidationReport validate(const ProblemData& p, int samples);
ValidationReport validate(const ProblemSpec& spec, int samples);

/// A problem that passed validation. Every downstream module takes this type.
class Problem {
 public:
  static constexpr int kDefaultValidationSamples = 512;

  /// Throws ValidationError if validation fails.
  static Problem create(const ProblemSpec& spec, int samples = kDefaultValidationSamples);
  static Problem create(ProblemData data, int samples = kDefaultValidationSamples);

  const ProblemData& data() const { return data_; }
  int d() const { return data_.d; }
  int dprime() const { return data_.dprime; }
  double T() const { return data_.T; }
  const Expr& g() const { return data_.g; }
  double g_min() const { return data_.g_min; }
  double g_max() const { return data_.g_max; }
  const Eigen::VectorXd& lo() const { return data_.lo; }
  const Eigen::VectorXd& hi() const { return data_.hi; }
  const ValidationReport& report() const { return report_; }

  void drift(double t, const double* x, double* out) const;
  /// out is d x d', row major.
  void diffusion(double t, const double* x, double* out) const;
  /// sigma sigma^T, d x d.
  Eigen::MatrixXd covariance(double t, const Eigen::VectorXd& x) const;

  /// Same coefficients, payoff replaced by its negation and bounds mirrored.
  Problem negated_payoff() const;

 private:
  Problem(ProblemData data, ValidationReport report) : data_(std::move(data)), report_(std::move(report)) {}
  ProblemData data_;
  ValidationReport report_;
};

/// One-dimensional problem from expression strings.
ProblemSpec spec_1d(const std::string& drift, const std::string& diffusion, const std::string& payoff,
                    double T, double lo, double hi, double g_min, double g_max);

const char* truncation_caveat();

}  // namespace perronlab
