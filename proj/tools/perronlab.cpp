// perronlab command-line driver.
//
// Exit codes: 0 pass, 1 verdict failure, 2 configuration or parse error,
// 3 numerical failure (path explosion, solver breakdown).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "perronlab/checks.hpp"
#include "perronlab/errors.hpp"
#include "perronlab/io.hpp"
#include "perronlab/montecarlo.hpp"
#include "perronlab/parallel.hpp"
#include "perronlab/pde.hpp"
#include "perronlab/perron.hpp"
#include "perronlab/problem.hpp"

namespace fs = std::filesystem;
using namespace perronlab;
using io::json;

namespace {

struct VerdictFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Run parameters. Defaults < --config file < explicit flags.
struct Params {
  std::string problem;
  std::string config;
  std::string out = ".";
  int grid_nx = 33;
  int grid_nt = 11;
  long paths = 2000;
  int steps = 20;
  std::uint64_t seed = 20240521;
  double theta = 0.5;
  double tol = -1.0;  // < 0: default_tolerance of the grid
  int budget = 5000;
  double alpha = 0.01;
  int threads = 1;
  // subcommand specific
  std::string at;
  std::string kind = "super";
  std::string candidate;
  std::string candidate_grid;
  std::vector<std::string> starts;
  std::string direction = "both";
  double allowance = 1e-3;
  double stderr_threshold = 0.01;
  int bins = 10;
  bool mc_guard = false;
};

struct Flags {
  CLI::Option* grid_nx = nullptr;
  CLI::Option* grid_nt = nullptr;
  CLI::Option* paths = nullptr;
  CLI::Option* steps = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* theta = nullptr;
  CLI::Option* tol = nullptr;
  CLI::Option* budget = nullptr;
  CLI::Option* alpha = nullptr;
};

void add_common(CLI::App* sub, Params& p, Flags& f) {
  sub->add_option("--problem", p.problem, "problem JSON file")->required();
  sub->add_option("--config", p.config, "run config JSON; explicit flags win");
  sub->add_option("--out", p.out, "output directory");
  f.grid_nx = sub->add_option("--grid-nx", p.grid_nx, "space nodes per dimension");
  f.grid_nt = sub->add_option("--grid-nt", p.grid_nt, "time nodes");
  f.paths = sub->add_option("--paths", p.paths, "Monte Carlo paths M");
  f.steps = sub->add_option("--steps", p.steps, "Euler-Maruyama steps N");
  f.seed = sub->add_option("--seed", p.seed, "base seed");
  f.theta = sub->add_option("--theta", p.theta, "theta of the time scheme");
  f.tol = sub->add_option("--tol", p.tol, "residual tolerance");
  f.budget = sub->add_option("--budget", p.budget, "max Perron bumps");
  f.alpha = sub->add_option("--alpha", p.alpha, "significance level");
  sub->add_option("--threads", p.threads, "worker threads (outputs do not depend on it)");
}

void apply_config(Params& p, const Flags& f) {
  if (p.config.empty()) return;
  std::ifstream in(p.config);
  if (!in) throw ConfigError("cannot open config " + p.config);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + p.config + " is not valid JSON");
  }
  auto take = [&](const char* key, auto& dst, CLI::Option* flag) {
    if (j.contains(key) && (!flag || flag->count() == 0)) {
      try {
        j.at(key).get_to(dst);
      } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
      }
    }
  };
  take("grid_nx", p.grid_nx, f.grid_nx);
  take("grid_nt", p.grid_nt, f.grid_nt);
  take("paths", p.paths, f.paths);
  take("steps", p.steps, f.steps);
  take("seed", p.seed, f.seed);
  take("theta", p.theta, f.theta);
  take("tol", p.tol, f.tol);
  take("budget", p.budget, f.budget);
  take("alpha", p.alpha, f.alpha);
}

std::vector<double> numbers(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in '" + s + "'");
    }
  }
  return v;
}

Start parse_start(const std::string& s, int d) {
  std::vector<double> v = numbers(s);
  if (static_cast<int>(v.size()) != d + 1) throw ConfigError("start '" + s + "' needs s and " + std::to_string(d) + " coordinates");
  Start st;
  st.s = v[0];
  st.x = Eigen::Map<Eigen::VectorXd>(v.data() + 1, d);
  return st;
}

// Five starts at s = 0 spread along the first coordinate, others centred.
std::vector<Start> default_starts(const Problem& p) {
  std::vector<Start> out;
  Eigen::VectorXd c = 0.5 * (p.lo() + p.hi());
  for (int i = 1; i <= 5; ++i) {
    Start st{0.0, c};
    st.x(0) = p.lo()(0) + (p.hi()(0) - p.lo()(0)) * (0.25 + 0.5 * (i - 1) / 4.0);
    out.push_back(st);
  }
  return out;
}

struct Run {
  Params prm;
  ProblemSpec spec;
  json config;  // everything that determines the payload; no paths, no thread count
  std::shared_ptr<const Grid> grid;

  json meta() const { return io::metadata(config, prm.seed, grid ? io::grid_spec(*grid) : json(nullptr)); }
  std::string path(const std::string& name) const { return (fs::path(prm.out) / name).string(); }
};

Run prepare(const std::string& cmd, Params prm, const Flags& f) {
  apply_config(prm, f);
  set_threads(prm.threads);
  Run r;
  r.spec = io::load_problem(prm.problem);
  if (prm.grid_nx < 3 || prm.grid_nt < 2) throw ConfigError("grid needs at least 3 space and 2 time nodes");
  if (prm.paths < 2 || prm.steps < 1) throw ConfigError("need at least 2 paths and 1 step");
  fs::create_directories(prm.out);
  json c;
  c["command"] = cmd;
  c["problem"] = io::problem_to_json(r.spec);
  c["grid_nx"] = prm.grid_nx;
  c["grid_nt"] = prm.grid_nt;
  c["paths"] = prm.paths;
  c["steps"] = prm.steps;
  c["seed"] = prm.seed;
  c["theta"] = prm.theta;
  c["tol"] = prm.tol;
  c["budget"] = prm.budget;
  c["alpha"] = prm.alpha;
  if (cmd == "check") {
    c["kind"] = prm.kind;
    c["candidate"] = prm.candidate;
    c["candidate_grid"] = prm.candidate_grid.empty() ? "" : fs::path(prm.candidate_grid).filename().string();
    c["bins"] = prm.bins;
    c["allowance"] = prm.allowance;
    c["stderr_threshold"] = prm.stderr_threshold;
  }
  if (cmd == "check" || cmd == "sandwich") c["starts"] = prm.starts;
  if (cmd == "perron") c["direction"] = prm.direction;
  if (cmd == "perron" || cmd == "sandwich") c["mc_guard"] = prm.mc_guard;
  if (cmd == "estimate") c["at"] = prm.at;
  r.prm = prm;
  r.config = c;
  return r;
}

std::shared_ptr<const Grid> make_grid(const Problem& p, const Params& prm) {
  return std::make_shared<const Grid>(Grid::uniform(p, prm.grid_nt, prm.grid_nx));
}

void write_report(const Run& r, const std::string& name, const json& report) {
  json j;
  j["metadata"] = r.meta();
  j["report"] = report;
  io::write_json(r.path(name), j);
}

MartingaleOptions martingale_options(const Params& prm) {
  MartingaleOptions o;
  o.M = prm.paths;
  o.N = prm.steps;
  o.seed = prm.seed;
  o.alpha = prm.alpha;
  o.bins = prm.bins;
  o.allowance = prm.allowance;
  o.stderr_threshold = prm.stderr_threshold;
  return o;
}

PerronOptions perron_options(const Params& prm, const Grid& g) {
  PerronOptions o;
  o.tol = prm.tol > 0 ? prm.tol : default_tolerance(g);
  o.budget = prm.budget;
  return o;
}

int cmd_validate(Run r) {
  ValidationReport rep = validate(r.spec, Problem::kDefaultValidationSamples);
  write_report(r, "validation.json", io::to_json(rep));
  if (!rep.passed) throw VerdictFailure("validate: " + rep.failure);
  return 0;
}

int cmd_estimate(Run r) {
  Problem p = Problem::create(r.spec);
  if (!r.prm.at.empty()) {
    Start st = parse_start(r.prm.at, p.d());
    Estimate e = estimate_value(p, st.s, st.x, r.prm.paths, r.prm.steps, r.prm.seed);
    std::ofstream out(r.path("estimate.csv"), std::ios::binary);
    out << "# " << r.meta().dump() << '\n';
    out << 's';
    for (int j = 0; j < p.d(); ++j) out << ",x" << j + 1;
    out << ",value,stderr,ci_lo,ci_hi,paths\n" << io::format_double(st.s);
    for (int j = 0; j < p.d(); ++j) out << ',' << io::format_double(st.x(j));
    out << ',' << io::format_double(e.value) << ',' << io::format_double(e.stderr_) << ','
        << io::format_double(e.ci95.first) << ',' << io::format_double(e.ci95.second) << ',' << e.M << '\n';
    return 0;
  }
  r.grid = make_grid(p, r.prm);
  GridEstimate ge = estimate_grid(p, r.grid, r.prm.paths, r.prm.steps, r.prm.seed);
  io::write_grid_csv(r.path("estimate.csv"), r.meta(), {&ge.value, &ge.stderr_}, {"value", "stderr"});
  if (!ge.invalid_nodes.empty())
    throw ExplosionError(-1, -1, "estimate: " + std::to_string(ge.invalid_nodes.size()) + " nodes failed, first: " +
                                     ge.invalid_reasons.front());
  return 0;
}

int cmd_solve(Run r) {
  Problem p = Problem::create(r.spec);
  r.grid = make_grid(p, r.prm);
  SolveOptions so;
  so.theta = r.prm.theta;
  SolveResult res = solve_terminal_value(p, r.grid, so);
  io::write_grid_csv(r.path("solution.csv"), r.meta(), {&res.u}, {"u"});
  write_report(r, "solve.json", io::summary(res));
  return 0;
}

int cmd_check(Run r) {
  Problem p = Problem::create(r.spec);
  r.grid = make_grid(p, r.prm);
  const Grid& g = *r.grid;
  if (r.prm.candidate.empty() == r.prm.candidate_grid.empty())
    throw ConfigError("check: give exactly one of --candidate and --candidate-grid");
  std::optional<Expr> expr;
  std::optional<GridFn> gridfn;
  if (!r.prm.candidate.empty()) expr = parse(r.prm.candidate, p.d());
  else gridfn = io::read_grid_csv(r.prm.candidate_grid);

  const std::string& kind = r.prm.kind;
  if (kind == "viscosity-sub" || kind == "viscosity-super") {
    GridFn u;
    if (expr) {
      Eigen::MatrixXd v(g.nt(), g.space_size());
      for (int k = 0; k < g.nt(); ++k)
        for (int s = 0; s < g.space_size(); ++s) v(k, s) = (*expr)(g.t(k), g.point(s));
      u = GridFn(r.grid, v, Regularity::Continuous);
    } else {
      u = *gridfn;
    }
    const double tol = r.prm.tol > 0 ? r.prm.tol : default_tolerance(*u.grid);
    ViscosityReport rep =
        check_viscosity(u, p, kind == "viscosity-sub" ? ViscosityKind::Sub : ViscosityKind::Super, tol);
    write_report(r, "check.json", io::to_json(rep, *u.grid));
    if (!rep.passed) throw VerdictFailure("check " + kind + ": " + std::to_string(rep.residual_violations) +
                                          " residual and " + std::to_string(rep.terminal_violations) +
                                          " terminal violations");
    return 0;
  }

  Candidate cand = expr ? Candidate::from_expr(*expr) : Candidate::from_grid(*gridfn, r.prm.candidate_grid);
  std::vector<Start> starts;
  for (const auto& s : r.prm.starts) starts.push_back(parse_start(s, p.d()));
  if (starts.empty()) starts = default_starts(p);
  MartingaleOptions mo = martingale_options(r.prm);

  // Terminal condition of the class: u(T) >= g for super, u(T) <= g for sub.
  json terminal = nullptr;
  std::string terminal_failure;
  if (kind == "super" || kind == "sub") {
    const double tol = r.prm.tol > 0 ? r.prm.tol : 0.0;
    const int K = g.nt() - 1;
    double worst = 0.0;
    int bad = 0;
    for (int s = 0; s < g.space_size(); ++s) {
      Eigen::VectorXd x = g.point(s);
      double slack = cand(g.t(K), x.data(), nullptr) - p.g()(g.t(K), x);
      double excess = (kind == "super" ? -slack : slack) - tol;
      if (excess > 0) {
        ++bad;
        worst = std::max(worst, excess);
      }
    }
    terminal = {{"violations", bad}, {"worst_excess", worst}, {"tol", tol}};
    if (bad) terminal_failure = "terminal slack violated at " + std::to_string(bad) + " nodes";
  }

  MartingaleReport rep;
  if (kind == "super") rep = check_supermartingale(p, cand, starts, mo);
  else if (kind == "sub") rep = check_submartingale(p, cand, starts, mo);
  else if (kind == "martingale") rep = check_martingale(p, cand, starts, mo);
  else throw ConfigError("check: unknown kind '" + kind + "'");
  json j = io::to_json(rep);
  j["terminal_condition"] = terminal;
  write_report(r, "check.json", j);
  if (!terminal_failure.empty()) throw VerdictFailure("check " + kind + ": " + terminal_failure);
  if (rep.verdict != Verdict::Consistent)
    throw VerdictFailure("check " + kind + ": verdict " + to_string(rep.verdict));
  return 0;
}

void write_perron(const Run& r, const PerronState& st, const std::string& name) {
  io::write_grid_csv(r.path(name + ".csv"), r.meta(), {&st.envelope}, {name});
  std::ofstream log(r.path(name + ".jsonl"), std::ios::binary);
  log << json{{"metadata", r.meta()}}.dump() << '\n';
  io::write_jsonl(log, st.log);
}

int cmd_perron(Run r) {
  Problem p = Problem::create(r.spec);
  r.grid = make_grid(p, r.prm);
  PerronOptions po = perron_options(r.prm, *r.grid);
  const std::string& dir = r.prm.direction;
  if (dir != "upper" && dir != "lower" && dir != "both") throw ConfigError("perron: direction must be upper, lower or both");
  json rep;
  rep["tol"] = po.tol;
  bool ok = true;
  std::optional<PerronState> up, lo;
  if (dir != "lower") {
    up = perron_iterate(p, r.grid, po);
    write_perron(r, *up, "upper");
    rep["upper"] = io::summary(*up);
    ok = ok && up->converged;
  }
  if (dir != "upper") {
    lo = perron_lower(p, r.grid, po);
    write_perron(r, *lo, "lower");
    rep["lower"] = io::summary(*lo);
    ok = ok && lo->converged;
  }
  if (up && lo) rep["max_gap"] = (up->envelope.values - lo->envelope.values).cwiseAbs().maxCoeff();
  write_report(r, "perron.json", rep);
  if (!ok) throw VerdictFailure("perron: iteration did not converge");
  return 0;
}

int cmd_sandwich(Run r) {
  Problem p = Problem::create(r.spec);
  r.grid = make_grid(p, r.prm);
  const Grid& g = *r.grid;

  GridEstimate mc = estimate_grid(p, r.grid, r.prm.paths, r.prm.steps, r.prm.seed);
  PerronOptions po = perron_options(r.prm, g);
  if (r.prm.mc_guard) po.mc = &mc;
  PerronPair pp = perron_both(p, r.grid, po);
  SolveOptions so;
  so.theta = r.prm.theta;
  SolveResult sol = solve_terminal_value(p, r.grid, so);

  // Lateral boundary nodes carry Dirichlet data in the envelopes but not in
  // the free-space Monte Carlo estimate, so only interior nodes are compared.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask = mc.valid;
  for (int k = 0; k < g.nt(); ++k)
    for (int s = 0; s < g.space_size(); ++s)
      if (g.on_space_boundary(s)) mask(k, s) = false;
  SandwichReport sw = check_sandwich(pp.lower.envelope, mc.value, mc.stderr_, pp.upper.envelope, {}, &mask);

  std::vector<Start> starts;
  for (const auto& s : r.prm.starts) starts.push_back(parse_start(s, p.d()));
  if (starts.empty()) starts = default_starts(p);
  MartingaleReport mart = check_martingale(p, Candidate::from_grid(sol.u, "pde solution"), starts, martingale_options(r.prm));

  io::write_grid_csv(r.path("sandwich.csv"), r.meta(), {&pp.lower.envelope, &mc.value, &mc.stderr_, &pp.upper.envelope, &sol.u},
                     {"lower", "mc", "mc_stderr", "upper", "pde"});
  write_perron(r, pp.upper, "upper");
  write_perron(r, pp.lower, "lower");

  std::string failing;
  if (!mc.invalid_nodes.empty()) failing = "estimate_grid";
  else if (!sw.passed()) failing = "check_sandwich";
  else if (mart.verdict != Verdict::Consistent) failing = "check_martingale";
  json rep;
  rep["passed"] = failing.empty();
  rep["first_failure"] = failing;
  rep["perron"] = {{"upper", io::summary(pp.upper)}, {"lower", io::summary(pp.lower)}, {"max_gap", pp.max_gap},
                   {"tol", po.tol}};
  rep["estimate_grid"] = {{"invalid_nodes", mc.invalid_nodes.size()}};
  rep["solve"] = io::summary(sol);
  rep["sandwich"] = io::to_json(sw);
  rep["martingale"] = io::to_json(mart);
  write_report(r, "sandwich.json", rep);
  if (!failing.empty()) throw VerdictFailure("sandwich: " + failing + " failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perronlab: Feynman-Kac, Perron envelopes and martingale checks"};
  app.require_subcommand(1);
  Params prm;
  std::map<std::string, Flags> flags;
  auto* v = app.add_subcommand("validate", "sample-check a problem file");
  add_common(v, prm, flags["validate"]);
  auto* e = app.add_subcommand("estimate", "Monte Carlo value at a point or on the grid");
  add_common(e, prm, flags["estimate"]);
  e->add_option("--at", prm.at, "s,x1,...,xd (default: whole grid)");
  auto* s = app.add_subcommand("solve", "theta-scheme solution on the grid");
  add_common(s, prm, flags["solve"]);
  auto* c = app.add_subcommand("check", "martingale or viscosity checks of a candidate");
  add_common(c, prm, flags["check"]);
  c->add_option("--kind", prm.kind, "super, sub, martingale, viscosity-sub or viscosity-super")
      ->check(CLI::IsMember({"super", "sub", "martingale", "viscosity-sub", "viscosity-super"}));
  c->add_option("--candidate", prm.candidate, "candidate expression in t, x1..xd");
  c->add_option("--candidate-grid", prm.candidate_grid, "candidate grid CSV");
  c->add_option("--start", prm.starts, "start point s,x1,...,xd (repeatable)");
  c->add_option("--bins", prm.bins, "conditional bins");
  c->add_option("--allowance", prm.allowance, "per-step discretisation allowance");
  c->add_option("--stderr-threshold", prm.stderr_threshold, "power proxy on marginal stderr");
  auto* pc = app.add_subcommand("perron", "upper and lower Perron envelopes");
  add_common(pc, prm, flags["perron"]);
  pc->add_option("--direction", prm.direction, "upper, lower or both")
      ->check(CLI::IsMember({"upper", "lower", "both"}));
  auto* sw = app.add_subcommand("sandwich", "perron(both), estimate, solve, sandwich and martingale checks");
  add_common(sw, prm, flags["sandwich"]);
  sw->add_option("--start", prm.starts, "martingale start s,x1,...,xd (repeatable)");
  for (auto* sub : {pc, sw}) sub->add_flag("--mc-guard", prm.mc_guard, "reject bumps that cross the MC band");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    int rc = app.exit(ex);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      Run r = prepare(name, prm, flags[name]);
      if (name == "validate") return cmd_validate(r);
      if (name == "estimate") return cmd_estimate(r);
      if (name == "solve") return cmd_solve(r);
      if (name == "check") return cmd_check(r);
      if (name == "perron") return cmd_perron(r);
      if (name == "sandwich") return cmd_sandwich(r);
    }
  } catch (const VerdictFailure& ex) {
    std::cerr << ex.what() << '\n';
    return 1;
  } catch (const ParseError& ex) {
    std::cerr << "parse error at " << ex.position() << ": " << ex.what() << '\n';
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const ValidationError& ex) {
    std::cerr << "invalid problem: " << ex.what() << '\n';
    return 2;
  } catch (const DifferentiationError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const ExplosionError& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return 3;
  } catch (const SolverError& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return 3;
  } catch (const DomainError& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return 3;
  }
  return 2;
}
