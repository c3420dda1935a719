#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "perronlab/checks.hpp"
#include "perronlab/lattice.hpp"
#include "perronlab/montecarlo.hpp"
#include "perronlab/pde.hpp"
#include "perronlab/perron.hpp"
#include "perronlab/problem.hpp"

namespace perronlab::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Problem file:
///   {"dimension": 1, "brownian_dimension": 1, "horizon": 1,
///    "drift": ["0"], "diffusion": [["1"]], "payoff": "tanh(x1)",
///    "payoff_bounds": [-1, 1], "box": [[-8, 8]]}
/// Throws ConfigError on missing or mistyped fields.
ProblemSpec problem_from_json(const json& j);
json problem_to_json(const ProblemSpec& spec);
ProblemSpec load_problem(const std::string& path);

/// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const json& config);

/// {"tool", "version", "config_hash", "seed", "grid", "config"}.
json metadata(const json& config, std::uint64_t seed, const json& grid_spec);
json grid_spec(const Grid& g);

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// "# <metadata json>" line, a header "t,x1,..,xd,<name>" and one row per node
/// (time-major, first space coordinate fastest).
void write_grid_csv(std::ostream& os, const json& meta, const std::vector<const GridFn*>& fns,
                    const std::vector<std::string>& names);
void write_grid_csv(const std::string& path, const json& meta, const std::vector<const GridFn*>& fns,
                    const std::vector<std::string>& names);

/// Reads the first value column of a grid CSV. The grid is rebuilt from the
/// distinct coordinates. Lines starting with '#' are skipped.
GridFn read_grid_csv(const std::string& path);

json to_json(const ValidationReport& r);
json to_json(const Estimate& e);
json to_json(const MartingaleReport& r);
json to_json(const ViscosityReport& r, const Grid& g);
json to_json(const SandwichReport& r);
json to_json(const BumpRecord& r);
json to_json(const CandidateSupersolution& c);
json summary(const PerronState& s);
json summary(const SolveResult& r);

void write_jsonl(std::ostream& os, const std::vector<BumpRecord>& log);
void write_json(const std::string& path, const json& j);
void write_text(const std::string& path, const std::string& s);

}  // namespace perronlab::io
