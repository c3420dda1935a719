#include "perronlab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "perronlab/errors.hpp"

namespace perronlab::io {

namespace {

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("problem file: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("problem file: field '") + key + "' has the wrong type");
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
  return a;
}

}  // namespace

ProblemSpec problem_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("problem file: expected a JSON object");
  ProblemSpec s;
  s.dimension = field<int>(j, "dimension");
  s.brownian_dimension = j.contains("brownian_dimension") ? field<int>(j, "brownian_dimension") : s.dimension;
  s.horizon = field<double>(j, "horizon");
  s.drift = field<std::vector<std::string>>(j, "drift");
  s.diffusion = field<std::vector<std::vector<std::string>>>(j, "diffusion");
  s.payoff = field<std::string>(j, "payoff");
  auto bounds = field<std::vector<double>>(j, "payoff_bounds");
  if (bounds.size() != 2) throw ConfigError("problem file: payoff_bounds needs two numbers");
  s.payoff_min = bounds[0];
  s.payoff_max = bounds[1];
  auto box = field<std::vector<std::vector<double>>>(j, "box");
  for (const auto& b : box) {
    if (b.size() != 2) throw ConfigError("problem file: every box entry needs [lo, hi]");
    s.box.emplace_back(b[0], b[1]);
  }
  return s;
}

json problem_to_json(const ProblemSpec& s) {
  json j;
  j["dimension"] = s.dimension;
  j["brownian_dimension"] = s.brownian_dimension;
  j["horizon"] = s.horizon;
  j["drift"] = s.drift;
  j["diffusion"] = s.diffusion;
  j["payoff"] = s.payoff;
  j["payoff_bounds"] = {s.payoff_min, s.payoff_max};
  json box = json::array();
  for (const auto& [lo, hi] : s.box) box.push_back({lo, hi});
  j["box"] = box;
  return j;
}

ProblemSpec load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problem file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("problem file " + path + " is not valid JSON: " + e.what());
  }
  return problem_from_json(j);
}

std::string config_hash(const json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json grid_spec(const Grid& g) {
  json j;
  j["nt"] = g.nt();
  j["T"] = g.t(g.nt() - 1);
  json dims = json::array();
  for (int i = 0; i < g.dim(); ++i)
    dims.push_back({{"nx", g.nx(i)}, {"lo", g.space(i)(0)}, {"hi", g.space(i)(g.nx(i) - 1)}});
  j["space"] = dims;
  return j;
}

json metadata(const json& config, std::uint64_t seed, const json& grid) {
  json m;
  m["tool"] = "perronlab";
  m["version"] = kToolVersion;
  m["config_hash"] = config_hash(config);
  m["seed"] = seed;
  m["grid"] = grid;
  m["config"] = config;
  return m;
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_grid_csv(std::ostream& os, const json& meta, const std::vector<const GridFn*>& fns,
                    const std::vector<std::string>& names) {
  if (fns.empty() || fns.size() != names.size()) throw std::invalid_argument("grid csv needs one name per function");
  const Grid& g = *fns.front()->grid;
  os << "# " << meta.dump() << '\n';
  os << 't';
  for (int j = 0; j < g.dim(); ++j) os << ",x" << j + 1;
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  Eigen::VectorXd x(g.dim());
  for (int k = 0; k < g.nt(); ++k)
    for (int s = 0; s < g.space_size(); ++s) {
      g.point(s, x.data());
      os << format_double(g.t(k));
      for (int j = 0; j < g.dim(); ++j) os << ',' << format_double(x(j));
      for (const GridFn* f : fns) os << ',' << format_double(f->values(k, s));
      os << '\n';
    }
}

void write_grid_csv(const std::string& path, const json& meta, const std::vector<const GridFn*>& fns,
                    const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  write_grid_csv(out, meta, fns, names);
  json side;
  side["metadata"] = meta;
  side["grid"] = grid_spec(*fns.front()->grid);
  side["columns"] = names;
  side["regularity"] = json::array();
  for (const GridFn* f : fns) side["regularity"].push_back(to_string(f->tag));
  write_json(path + ".json", side);
}

GridFn read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file " + path);
  std::string line;
  int ncols = -1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (ncols < 0) {  // header
      ncols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
      if (ncols < 3) throw ConfigError(path + ": need t, at least one x and a value column");
      continue;
    }
    std::vector<double> r;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc() || res.ptr != comma) throw ConfigError(path + ": bad number in '" + line + "'");
      r.push_back(v);
      p = comma + 1;
    }
    if (static_cast<int>(r.size()) != ncols) throw ConfigError(path + ": ragged row '" + line + "'");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError(path + ": no data rows");
  // columns: t, x1..xd, values...; d is fixed by the header names
  std::ifstream again(path);
  std::string header;
  while (std::getline(again, header))
    if (!header.empty() && header[0] != '#') break;
  int d = 0;
  std::stringstream hs(header);
  std::string name;
  while (std::getline(hs, name, ','))
    if (name.size() > 1 && name[0] == 'x' && std::all_of(name.begin() + 1, name.end(), ::isdigit)) ++d;
  if (d == 0 || d + 2 > ncols) throw ConfigError(path + ": header names no x columns");
  auto distinct = [&](int col) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[col]);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return Eigen::Map<Eigen::VectorXd>(v.data(), v.size()).eval();
  };
  std::vector<Eigen::VectorXd> space;
  for (int j = 0; j < d; ++j) space.push_back(distinct(1 + j));
  auto grid = std::make_shared<const Grid>(distinct(0), space);
  if (static_cast<long>(rows.size()) != grid->size()) throw ConfigError(path + ": rows do not form a tensor grid");
  Eigen::MatrixXd v(grid->nt(), grid->space_size());
  for (const auto& r : rows) {
    const Eigen::VectorXd& tn = grid->time();
    int k = static_cast<int>(std::lower_bound(tn.data(), tn.data() + tn.size(), r[0]) - tn.data());
    std::vector<int> idx(d);
    for (int j = 0; j < d; ++j) {
      const Eigen::VectorXd& xs = grid->space(j);
      idx[j] = static_cast<int>(std::lower_bound(xs.data(), xs.data() + xs.size(), r[1 + j]) - xs.data());
    }
    v(k, grid->flatten(idx)) = r[1 + d];
  }
  return GridFn(grid, std::move(v), Regularity::Unknown);
}

json to_json(const ValidationReport& r) {
  json j;
  j["passed"] = r.passed;
  j["samples"] = r.samples;
  j["growth_constant"] = number_or_null(r.growth_constant);
  j["g_min_seen"] = number_or_null(r.g_min_seen);
  j["g_max_seen"] = number_or_null(r.g_max_seen);
  j["g_bounds_ok"] = r.g_bounds_ok;
  if (r.g_bounds_witness) {
    j["g_bounds_witness"] = vec(*r.g_bounds_witness);
    j["g_bounds_witness_value"] = number_or_null(r.g_bounds_witness_value);
  }
  j["coefficients_finite"] = r.coefficients_finite;
  j["failure"] = r.failure;
  j["truncation_caveat"] = r.truncation_caveat;
  return j;
}

json to_json(const Estimate& e) {
  return {{"value", e.value}, {"stderr", e.stderr_}, {"paths", e.M}, {"ci95", {e.ci95.first, e.ci95.second}}};
}

json to_json(const MartingaleReport& r) {
  json j;
  j["candidate"] = r.label;
  j["property"] = to_string(r.kind);
  j["verdict"] = to_string(r.verdict);
  j["coverage"] = r.coverage;
  j["options"] = {{"paths", r.options.M},
                  {"steps", r.options.N},
                  {"seed", r.options.seed},
                  {"alpha", r.options.alpha},
                  {"bins", r.options.bins},
                  {"allowance", r.options.allowance},
                  {"stderr_threshold", r.options.stderr_threshold}};
  j["comparisons_per_start"] = r.comparisons_per_start;
  j["critical_value"] = r.critical_value;
  json starts = json::array();
  for (const auto& s : r.starts) {
    json o;
    o["s"] = s.start.s;
    o["x"] = vec(s.start.x);
    o["times"] = vec(s.times);
    o["means"] = vec(s.means);
    o["mean_stderr"] = vec(s.mean_se);
    o["marginal"] = to_string(s.marginal);
    o["conditional"] = to_string(s.conditional);
    o["verdict"] = to_string(s.verdict);
    o["max_marginal_stderr"] = s.max_marginal_stderr;
    o["clamp_rate"] = s.clamp_rate();
    json cs = json::array();
    for (const auto& c : s.comparisons)
      cs.push_back({{"step", c.step},
                    {"bin", c.bin},
                    {"count", c.count},
                    {"mean", c.mean},
                    {"stderr", c.stderr_},
                    {"threshold", c.threshold},
                    {"rejected", c.rejected}});
    o["comparisons"] = cs;
    starts.push_back(o);
  }
  j["starts"] = starts;
  return j;
}

json to_json(const ViscosityReport& r, const Grid& g) {
  json j;
  j["kind"] = r.kind == ViscosityKind::Super ? "super" : "sub";
  j["tol"] = r.tol;
  j["passed"] = r.passed;
  j["residual_violations"] = r.residual_violations;
  j["terminal_violations"] = r.terminal_violations;
  if (r.worst_k >= 0) {
    j["worst"] = {{"k", r.worst_k}, {"s", r.worst_s}, {"t", g.t(r.worst_k)}, {"x", vec(g.point(r.worst_s))},
                  {"excess", r.worst_value}};
  }
  j["caveat"] = r.caveat;
  return j;
}

json to_json(const SandwichReport& r) {
  json j;
  j["passed"] = r.passed();
  j["checked"] = r.checked;
  j["skipped"] = r.skipped;
  j["rule"] = {{"stderr_multiplier", r.rule.stderr_multiplier}, {"allowance", r.rule.allowance}};
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"k", x.k}, {"s", x.s}, {"side", x.lower_side ? "lower" : "upper"}, {"amount", x.amount}});
  j["violations"] = v;
  return j;
}

json to_json(const BumpRecord& r) {
  return {{"iteration", r.iteration},
          {"kind", r.kind == BumpKind::Interior ? "interior" : "terminal"},
          {"k", r.k},
          {"s", r.s},
          {"excess", r.excess},
          {"eps", r.radius},
          {"eta", r.eta},
          {"delta", r.delta},
          {"decrease", r.decrease},
          {"lambda", r.lambda},
          {"mu", r.mu},
          {"doublings", r.doublings},
          {"attempts", r.attempts},
          {"nodes", r.nodes}};
}

json to_json(const CandidateSupersolution& c) {
  return {{"expr", print(c.expr)},
          {"origin", c.origin},
          {"support", c.support.size()},
          {"residual_min", number_or_null(c.residual_min)},
          {"terminal_slack_min", number_or_null(c.terminal_slack_min)},
          {"admitted", c.admitted}};
}

json summary(const PerronState& s) {
  return {{"status", to_string(s.status)},
          {"converged", s.converged},
          {"bumps", s.bumps},
          {"interior_bumps", s.interior_bumps},
          {"terminal_bumps", s.terminal_bumps},
          {"skips", s.skips},
          {"family_size", s.family.size()},
          {"selected", s.selected},
          {"max_residual", number_or_null(s.max_residual)},
          {"min_residual", number_or_null(s.min_residual)},
          {"max_terminal_excess", number_or_null(s.max_terminal_excess)}};
}

json summary(const SolveResult& r) {
  return {{"max_abs_residual", r.max_abs_residual},
          {"residual_constant", r.residual_constant},
          {"upwind_nodes", r.upwind_nodes},
          {"warnings", r.warnings}};
}

void write_jsonl(std::ostream& os, const std::vector<BumpRecord>& log) {
  for (const auto& r : log) os << to_json(r).dump() << '\n';
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::string& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << s;
}

}  // namespace perronlab::io
