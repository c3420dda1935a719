#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

fs::path workdir() {
  fs::path w = PERRONLAB_WORKDIR;
  fs::create_directories(w);
  return w;
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path problem(const std::string& name, const std::string& payoff, double gmin, double gmax, const char* sigma = "1") {
  fs::path p = workdir() / (name + ".json");
  write(p, R"({"dimension": 1, "horizon": 1, "drift": ["0"], "diffusion": [[")" + std::string(sigma) +
               R"("]], "payoff": ")" + payoff + R"(", "payoff_bounds": [)" + std::to_string(gmin) + ", " +
               std::to_string(gmax) + R"(], "box": [[-4, 4]]})");
  return p;
}

// exit status of the CLI, stdout/stderr captured into <out>/log.txt
int run(const std::string& args, const fs::path& out) {
  fs::create_directories(out);
  std::string cmd = std::string("\"") + PERRONLAB_CLI + "\" " + args + " --out \"" + out.string() + "\" > \"" +
                    (out / "log.txt").string() + "\" 2>&1";
  int rc = std::system(cmd.c_str());
#ifdef WEXITSTATUS
  return WEXITSTATUS(rc);
#else
  return rc;
#endif
}

}  // namespace

TEST_CASE("validate and solve succeed on a well-posed problem") {
  fs::path pb = problem("tanh", "tanh(x1)", -1, 1);
  fs::path out = workdir() / "validate";
  CHECK(run("validate --problem " + pb.string(), out) == 0);
  auto j = nlohmann::json::parse(slurp(out / "validation.json"));
  CHECK(j.contains("metadata"));
  CHECK(run("solve --problem " + pb.string() + " --grid-nx 17 --grid-nt 11", workdir() / "solve") == 0);
  CHECK(fs::exists(workdir() / "solve" / "solution.csv"));
}

TEST_CASE("sandwich on a constant payoff passes") {
  fs::path pb = problem("const", "1", 1, 1);
  fs::path out = workdir() / "sandwich_const";
  CHECK(run("sandwich --problem " + pb.string() + " --grid-nx 9 --grid-nt 5 --paths 500 --steps 8", out) == 0);
  auto j = nlohmann::json::parse(slurp(out / "sandwich.json"));
  CHECK(j["report"]["passed"] == true);
}

TEST_CASE("a failing supermartingale check exits 1 and names the check") {
  fs::path pb = problem("tanh2", "tanh(x1)", -1, 1);
  fs::path out = workdir() / "check_fail";
  CHECK(run("check --kind super --candidate \"-t\" --problem " + pb.string() + " --paths 500 --steps 10", out) == 1);
  CHECK(slurp(out / "log.txt").find("check super") != std::string::npos);
}

TEST_CASE("bad input exits 2") {
  fs::path bad = problem("bad", "tanh(x1", -1, 1);
  CHECK(run("validate --problem " + bad.string(), workdir() / "bad") == 2);
  CHECK(run("validate --problem " + (workdir() / "missing.json").string(), workdir() / "missing") == 2);
  CHECK(run("frobnicate", workdir() / "unknown") == 2);
}

TEST_CASE("explosions exit 3") {
  fs::path pb = workdir() / "explode.json";
  write(pb, R"({"dimension": 1, "horizon": 1, "drift": ["x1^3"], "diffusion": [["0"]], "payoff": "0",
    "payoff_bounds": [0, 0], "box": [[1, 2]]})");
  CHECK(run("estimate --problem " + pb.string() + " --at 0,1.5 --paths 10 --steps 20", workdir() / "explode") == 3);
}

TEST_CASE("outputs do not depend on the thread count") {
  fs::path pb = problem("tanh3", "tanh(x1)", -1, 1);
  const std::string args = "estimate --problem " + pb.string() + " --grid-nx 9 --grid-nt 5 --paths 400 --steps 8";
  REQUIRE(run(args + " --threads 1", workdir() / "thr1") == 0);
  REQUIRE(run(args + " --threads 3", workdir() / "thr3") == 0);
  CHECK(slurp(workdir() / "thr1" / "estimate.csv") == slurp(workdir() / "thr3" / "estimate.csv"));
}
