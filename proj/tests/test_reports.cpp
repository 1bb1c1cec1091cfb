#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mrwlab/reports.hpp"

using namespace mrwlab;
using nlohmann::json;

namespace {

RunConfig config_of(const char* text) { return parse_run_config(json::parse(text)); }

struct WorkersGuard {
  explicit WorkersGuard(const char* value) { setenv("MRWLAB_WORKERS", value, 1); }
  ~WorkersGuard() { unsetenv("MRWLAB_WORKERS"); }
};

const char* kRandomVerify = R"({
  "model": {"zoo": "random_lattice", "params": {"seed": 31}},
  "seed": 4,
  "monte_carlo": {"occupation_reps": 6, "n_ladder": 400, "sigma0_reps": 1500, "n_back": 300,
                  "first_hit_reps": 10, "first_hit_horizon": 5000}
})";

}  // namespace

TEST_CASE("config parsing rejects unknown keys and bad ranges") {
  CHECK_THROWS_AS(config_of(R"({"model": {"zoo": "two_cycle"}, "sed": 1})"), ConfigError);
  CHECK_THROWS_AS(config_of(R"({"model": {"zoo": "two_cycle"}, "truncation": {"tol": 2}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_of(R"({"model": {"zoo": "two_cycle", "path": "x.json"}})"), ConfigError);
  CHECK_THROWS_AS(config_of(R"({"model": {"zoo": "two_cycle"}, "seed": -3})"), ConfigError);
  CHECK_THROWS_AS(config_of(R"({"model": {"zoo": "two_cycle"}, "simulate": {"initial_state": "q"}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_of(R"({"model": {"path": "/nonexistent/model.json"}})"), ConfigError);
  const RunConfig c = config_of(
      R"({"model": {"zoo": "two_cycle"}, "seed": 9, "truncation": {"K": 16, "tol": 1e-12},
          "simulate": {"initial_state": "b"}})");
  CHECK(*c.seed == 9);
  CHECK(c.exact.truncation.initial_depth == 16);
  CHECK(c.exact.truncation.tol == 1e-12);
  CHECK(c.simulate.initial_state == 1);
}

TEST_CASE("invalid inline models raise model errors") {
  CHECK_THROWS_AS(config_of(R"({"model": {"inline": {"states": ["a"], "transitions": [
      {"from": "a", "to": "a", "prob": 0.5, "increment": {"support": [1], "weights": [1]}}]}}})"),
                  ModelError);
  CHECK(exit_code_for(ErrorKind::kModel) == 2);
  CHECK(exit_code_for(ErrorKind::kConfig) == 2);
  CHECK(exit_code_for(ErrorKind::kIdentity) == 1);
  CHECK(exit_code_for(ErrorKind::kNonConvergence) == 3);
}

TEST_CASE("validate reports pi and drift") {
  const ReportBundle b = run_command("validate", config_of(R"({"model": {"zoo": "two_cycle"}})"));
  CHECK(b.exit_code == 0);
  CHECK(b.report["results"]["drift"].get<double>() == doctest::Approx(0.5));
  CHECK(b.report["results"]["stationary"][0].get<double>() == doctest::Approx(0.5));
  CHECK(b.tables.count("stationary.csv") == 1);
}

TEST_CASE("stochastic commands need a seed") {
  const RunConfig c = config_of(R"({"model": {"zoo": "two_cycle"}})");
  for (const char* cmd : {"verify", "simulate", "counterexample"}) {
    const ReportBundle b = run_command(cmd, c);
    CHECK(b.exit_code == 2);
    CHECK(b.report["status"] == "error");
  }
}

TEST_CASE("factorize exit codes") {
  CHECK(run_command("factorize", config_of(R"({"model": {"zoo": "simple_rw"}})")).exit_code == 0);
  const ReportBundle r2 = run_command("factorize", config_of(R"({"model": {"zoo": "remark2"}})"));
  CHECK(r2.exit_code == 3);
  CHECK(r2.report["error"]["kind"] == "non_convergence");
  const ReportBundle bad = run_command(
      "factorize", config_of(R"({"model": {"zoo": "simple_rw"}, "inject_perturbation": 1e-6})"));
  CHECK(bad.exit_code == 1);
}

TEST_CASE("verify passes and a perturbation fails") {
  const ReportBundle ok = run_command("verify", config_of(kRandomVerify));
  CHECK(ok.exit_code == 0);
  json j = json::parse(kRandomVerify);
  j["inject_perturbation"] = 1e-6;
  const ReportBundle bad = run_command("verify", parse_run_config(j));
  CHECK(bad.exit_code == 1);
  CHECK(bad.report["status"] == "fail");
}

TEST_CASE("reports are identical across runs and worker counts") {
  std::string one, again, four;
  {
    WorkersGuard g("1");
    one = run_command("verify", config_of(kRandomVerify)).report.dump();
    again = run_command("verify", config_of(kRandomVerify)).report.dump();
  }
  {
    WorkersGuard g("4");
    four = run_command("verify", config_of(kRandomVerify)).report.dump();
  }
  CHECK(one == again);
  CHECK(one == four);

  const char* sim = R"({"model": {"zoo": "random_lattice", "params": {"seed": 2}}, "seed": 8,
                        "simulate": {"replicates": 6, "coupling": {"runs": 20, "horizon": 2000}}})";
  std::string s1, s4;
  {
    WorkersGuard g("1");
    s1 = run_command("simulate", config_of(sim)).report.dump();
  }
  {
    WorkersGuard g("4");
    s4 = run_command("simulate", config_of(sim)).report.dump();
  }
  CHECK(s1 == s4);
}

TEST_CASE("simulate on the remark model sees only s as ladder state") {
  const ReportBundle b = run_command(
      "simulate", config_of(R"({"model": {"zoo": "remark2"}, "seed": 1,
                                "simulate": {"initial_state": "a", "n_steps": 3000}})"));
  CHECK(b.exit_code == 0);
  CHECK(b.report["results"]["ladder_state_counts"]["a"].get<double>() == 0.0);
  CHECK(b.report["results"]["ladder_state_counts"]["s"].get<double>() > 0.0);
  CHECK(b.report["results"]["occupation"].is_null());
}

TEST_CASE("counterexample audit") {
  const ReportBundle b = run_command(
      "counterexample",
      config_of(R"({"seed": 2, "counterexample": {"n_steps": 5000, "N": 500, "B": 20, "replicates": 500}})"));
  CHECK(b.exit_code == 0);
  CHECK(b.report["results"]["audit_dual"]["lower_bound_failures"] == 0);
}

TEST_CASE("bundles are written to disk") {
  const auto dir = std::filesystem::temp_directory_path() / "mrwlab_bundle_test";
  std::filesystem::remove_all(dir);
  const ReportBundle b = run_command("validate", config_of(R"({"model": {"zoo": "simple_rw"}})"));
  write_bundle(b, dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "summary.txt"));
  CHECK(std::filesystem::exists(dir / "stationary.csv"));
  std::ifstream in(dir / "report.json");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(json::parse(ss.str()) == b.report);
  std::filesystem::remove_all(dir);
}
