#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/lattice.hpp"
#include "perronlab/montecarlo.hpp"
#include "perronlab/problem.hpp"

namespace perronlab {

enum class Verdict { Consistent, Violated, Inconclusive };
const char* to_string(Verdict v);

/// A function of (t, x) evaluated along paths. Grid functions are
/// interpolated multilinearly and clamped to the box.
class Candidate {
 public:
  static Candidate from_expr(const Expr& e, std::string label = "");
  static Candidate from_grid(const GridFn& f, std::string label = "");

  double operator()(double t, const double* x, bool* clamped) const;
  const std::string& label() const { return label_; }
  bool is_grid() const { return grid_ != nullptr; }

 private:
  std::function<double(double, const double*, bool*)> fn_;
  std::shared_ptr<const GridFn> grid_;
  std::string label_;
};

struct Start {
  double s = 0.0;
  Eigen::VectorXd x;
};

struct MartingaleOptions {
  long M = 20000;
  int N = 20;
  std::uint64_t seed = 20240521;
  double alpha = 0.01;
  int bins = 10;
  double allowance = 1e-3;          // per-step discretisation slack on mean increments
  double stderr_threshold = 0.01;   // power proxy on marginal increments
};

enum class MartingaleKind { Super, Sub, Martingale };
const char* to_string(MartingaleKind k);

struct Comparison {
  int step = 0;  // increment from t_step to t_{step+1}
  int bin = -1;  // -1 for the marginal test
  long count = 0;
  double mean = 0.0;    // mean of u(t_{k+1}, X) - u(t_k, X)
  double stderr_ = 0.0;
  double threshold = 0.0;  // allowance + z * stderr
  bool rejected = false;
};

struct StartReport {
  Start start;
  Eigen::VectorXd times;
  Eigen::VectorXd means;     // mean of u(t_k, X_k)
  Eigen::VectorXd mean_se;   // its standard error
  std::vector<Comparison> comparisons;
  Verdict marginal = Verdict::Consistent;
  Verdict conditional = Verdict::Consistent;
  Verdict verdict = Verdict::Consistent;
  double max_marginal_stderr = 0.0;
  long evaluations = 0;
  long clamped = 0;
  double clamp_rate() const { return evaluations ? static_cast<double>(clamped) / evaluations : 0.0; }
};

struct MartingaleReport {
  std::string label;
  MartingaleKind kind = MartingaleKind::Super;
  MartingaleOptions options;
  int comparisons_per_start = 0;
  double critical_value = 0.0;
  std::vector<StartReport> starts;
  Verdict verdict = Verdict::Consistent;
  std::string coverage;
};

/// Paths for start i use seed derive_seed(options.seed, i), so super, sub and
/// martingale checks with equal options see identical bundles.
MartingaleReport check_supermartingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                       const MartingaleOptions& opt = {});
MartingaleReport check_submartingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                     const MartingaleOptions& opt = {});
MartingaleReport check_martingale(const Problem& p, const Candidate& u, const std::vector<Start>& starts,
                                  const MartingaleOptions& opt = {});

/// One-sided standard normal quantile.
double normal_quantile(double p);

enum class ViscosityKind { Sub, Super };

struct ViscosityReport {
  ViscosityKind kind = ViscosityKind::Super;
  double tol = 0.0;
  Eigen::MatrixXd residual;        // discrete residual, zero off residual nodes
  Eigen::VectorXd terminal_slack;  // u(T, x) - g(x)
  int residual_violations = 0;
  int terminal_violations = 0;
  int worst_k = -1;
  int worst_s = -1;
  double worst_value = 0.0;  // signed amount beyond tolerance at the worst node
  bool passed = true;
  std::string caveat;
};

ViscosityReport check_viscosity(const GridFn& u, const Problem& p, ViscosityKind kind, double tol);

struct SlackRule {
  double stderr_multiplier = 3.0;
  double allowance = 0.0;
};

struct SandwichViolation {
  int k = 0;
  int s = 0;
  bool lower_side = true;  // lower > mc + slack, else mc - slack > upper
  double amount = 0.0;
};

struct SandwichReport {
  long checked = 0;
  long skipped = 0;
  std::vector<SandwichViolation> violations;
  SlackRule rule;
  bool passed() const { return violations.empty(); }
};

/// `mask` (optional, nt x ns) selects the nodes that are checked.
SandwichReport check_sandwich(const GridFn& lower, const GridFn& mc, const GridFn& mc_stderr, const GridFn& upper,
                              const SlackRule& rule = {},
                              const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* mask = nullptr);

}  // namespace perronlab
