#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perronlab/expr.hpp"
#include "perronlab/lattice.hpp"
#include "perronlab/montecarlo.hpp"
#include "perronlab/pde.hpp"
#include "perronlab/problem.hpp"

namespace perronlab {

/// A smooth candidate checked on the grid. Members created by a bump are
/// local: they carry a support (flat node indices) and are only claimed to be
/// supersolutions there; elsewhere their grid value is g_max.
struct CandidateSupersolution {
  Expr expr;
  std::vector<long> support;  // empty = whole grid
  double residual_min = 0.0;
  double terminal_slack_min = 0.0;
  bool admitted = false;
  std::string origin;

  bool local() const { return !support.empty(); }
};

/// Symbolic residual at every residual node and terminal slack at every
/// terminal node. Throws DifferentiationError for non-smooth expressions.
CandidateSupersolution admit_candidate(const Problem& p, const Grid& grid, const Expr& e, double tol_admit,
                                       std::string origin = "");

/// Grid values of a member: the expression on its support (capped at g_max for
/// local members), g_max off the support, g on the lateral boundary.
GridFn evaluate_member(const Problem& p, std::shared_ptr<const Grid> grid, const CandidateSupersolution& c);

enum class BumpKind { Interior, Terminal };

struct BumpRecord {
  int iteration = 0;
  BumpKind kind = BumpKind::Interior;
  int k = 0;
  int s = 0;
  double excess = 0.0;  // residual (interior) or envelope - g (terminal) before the bump
  double radius = 0.0;  // eps, in space cells
  double eta = 0.0;
  double delta = 0.0;
  double decrease = 0.0;  // envelope change at (k, s)
  double lambda = 0.0;    // Hessian majorant (interior) or 2 / eta_w (terminal)
  double mu = 0.0;        // time curvature (interior) or k (terminal)
  int doublings = 0;      // terminal: k doublings
  int attempts = 0;       // radii tried
  int nodes = 0;          // patched nodes
};

enum class BumpStatus { Applied, NoViolation, Skipped };

struct BumpOutcome {
  BumpStatus status = BumpStatus::NoViolation;
  BumpRecord record;
  std::string reason;  // why a node was skipped
};

struct PerronOptions {
  double tol = 0.05;           // interior residual tolerance
  double terminal_tol = -1.0;  // < 0: same as tol
  double tol_admit = 1e-9;
  int budget = 5000;           // max bumps
  double eps_cells = 4.0;      // initial ball radius in space cells
  double eta_fraction = 0.5;   // eta = fraction * delta
  double kappa = 0.9;          // position of mu inside its admissible interval
  double min_progress = 0.05;  // delta must exceed this * residual * dt
  bool warm_start = true;      // add g + c (T - t) when g is smooth
  /// Optional sanity bound: bumps may not push the envelope below
  /// mc - mc_multiplier * stderr (upper run) on any node.
  const GridEstimate* mc = nullptr;
  double mc_multiplier = 3.0;
};

enum class PerronStatus { Converged, BudgetExhausted, Stalled };
const char* to_string(PerronStatus s);

struct PerronState {
  std::shared_ptr<const Grid> grid;
  CoefficientTable table;
  std::vector<CandidateSupersolution> family;
  GridFn envelope;  // tag USC
  Eigen::VectorXd payoff;  // g on the space nodes
  std::vector<BumpRecord> log;
  std::vector<long> skipped;  // flat nodes skipped since the last accepted bump
  std::vector<long> terminal_skipped;
  PerronStatus status = PerronStatus::BudgetExhausted;
  bool converged = false;
  int bumps = 0;
  int interior_bumps = 0;
  int terminal_bumps = 0;
  int skips = 0;
  int selected = 0;  // size of the last countable selection
  double max_residual = 0.0;          // max interior residual of the envelope
  double max_terminal_excess = 0.0;   // max envelope(T) - g over non-boundary nodes
  double min_residual = 0.0;
};

/// Family {g_max} (plus the warm start when enabled), envelope = its infimum.
PerronState initial_state(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt = {});

/// Recomputes the envelope from the family: countable selection first, then
/// the pointwise infimum over the selected members. Records the selection size.
GridFn build_envelope(const Problem& p, PerronState& state);

/// Interior bump at the worst non-skipped node whose residual exceeds tol.
BumpOutcome bump_step(PerronState& state, const Problem& p, const PerronOptions& opt);
/// Bump at a specific residual node (excess must be > 0).
BumpOutcome bump_at(PerronState& state, const Problem& p, int k, int s, const PerronOptions& opt);

/// Terminal bump at the worst non-skipped terminal node with envelope > g + tol.
BumpOutcome terminal_bump(PerronState& state, const Problem& p, const PerronOptions& opt);

/// Recomputes max_residual, min_residual and max_terminal_excess.
void refresh_diagnostics(PerronState& state);

/// Upper envelope v+ (infimum over supersolutions).
PerronState perron_iterate(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt = {});

struct PerronPair {
  PerronState upper;
  PerronState lower;  // values already mirrored: v- = -(v+ of the negated payoff)
  double max_gap = 0.0;
};

/// v- as the negation of the upper run on the negated payoff. A supplied MC
/// grid is mirrored for the lower run.
PerronState perron_lower(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt = {});
PerronPair perron_both(const Problem& p, std::shared_ptr<const Grid> grid, const PerronOptions& opt = {});

/// 5 (dt + dx^2) scaled by the heat-benchmark scheme constant.
double default_tolerance(const Grid& g, double scheme_constant = 1.0);

}  // namespace perronlab
