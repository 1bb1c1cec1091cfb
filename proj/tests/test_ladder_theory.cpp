#include <cmath>

#include "doctest.h"
#include "mrwlab/error.hpp"
#include "mrwlab/ladder_theory.hpp"

using namespace mrwlab;
using nlohmann::json;

namespace {

MonteCarloOptions small_mc(std::uint64_t seed) {
  MonteCarloOptions mc;
  mc.seed = seed;
  mc.occupation_reps = 10;
  mc.n_ladder = 1000;
  mc.sigma0_reps = 4000;
  mc.n_back = 500;
  mc.first_hit_reps = 20;
  mc.first_hit_horizon = 10000;
  return mc;
}

const IdentityCheck& find(const VerificationReport& r, const std::string& id) {
  for (const auto& c : r.checks)
    if (c.id == id) return c;
  FAIL("missing identity " << id);
  return r.checks.front();
}

}  // namespace

TEST_CASE("two-cycle pipeline in closed form") {
  const MRWSpec spec = model_zoo("two_cycle", json::object());
  const std::size_t a = spec.index_of("a");
  const std::size_t b = spec.index_of("b");
  const ExactPipeline ex = run_exact_pipeline(spec);
  CHECK(ex.exact.c == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ex.exact.pi_ladder[a] == 0.0);
  CHECK(ex.exact.pi_ladder[b] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(!ex.exact.support[a]);
  CHECK(ex.exact.support[b]);
  // v = pi (I - ||*G||) = (0, 1/2)
  CHECK(ex.nullvector.ladder.weighted_escape_lower[a] == 0.0);
  CHECK(ex.nullvector.ladder.weighted_escape_lower[b] == doctest::Approx(0.5));
  CHECK(ex.nu.nu[b][1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ex.nu.nu[b][0] == 0.0);
  CHECK(ex.expected.truncated_mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ex.factorization.max_entry_total_variation == 0.0);
}

TEST_CASE("simple walk pipeline matches p - q formulas") {
  const MRWSpec spec = model_zoo("simple_rw", {{"p", 0.6}});
  const ExactPipeline ex = run_exact_pipeline(spec);
  CHECK(std::abs(ex.exact.c - 0.2) < 1e-9);
  CHECK(ex.exact.pi_ladder[0] == doctest::Approx(1.0));
  CHECK(ex.nullvector.ladder.c == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(ex.nu.nu[0][0] == doctest::Approx(0.6).epsilon(1e-12));
  // P(sigma = 3) = q p^2
  CHECK(ex.nu.nu[0][2] == doctest::Approx(0.4 * 0.36).epsilon(1e-12));
  CHECK(ex.nu.nu[0][1] == 0.0);
  CHECK(std::abs(ex.expected.truncated_mean - 5.0) < 1e-7);
  CHECK(ex.expected.per_state_bound[0] == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(ex.expected.bound_holds[0]);
  CHECK(ex.factorization.max_entry_total_variation <= 1e-10);
}

TEST_CASE("nu defect shrinks as m_max grows") {
  const MRWSpec spec = model_zoo("simple_rw", {{"p", 0.6}});
  const ExactPipeline ex = run_exact_pipeline(spec);
  double prev = 1.0;
  for (std::size_t m_max : {1u, 5u, 50u, 500u, 5000u}) {
    const NuTable nu = joint_law_nu(spec, ex.exact, m_max, ex.ascending.truncation_depth);
    double total = nu.defect;
    for (double v : nu.nu[0]) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nu.defect <= prev);
    prev = nu.defect;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("all-positive increments give c = 1 and pi^> = pi") {
  RawModel raw;
  raw.states = {"u", "v", "w"};
  raw.transitions = {{"u", "v", 0.5, {{1.0}, {1.0}}},  {"u", "w", 0.5, {{2.0}, {1.0}}},
                     {"v", "w", 1.0, {{1.0, 3.0}, {0.5, 0.5}}},
                     {"w", "u", 0.3, {{1.0}, {1.0}}},  {"w", "w", 0.7, {{4.0}, {1.0}}}};
  const MRWSpec spec = validate_spec(raw);
  const ExactPipeline ex = run_exact_pipeline(spec);
  CHECK(ex.exact.c == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < spec.size(); ++i) {
    CHECK(ex.exact.pi_ladder[i] == doctest::Approx(ex.pi.pi(static_cast<Eigen::Index>(i))).epsilon(1e-12));
  }
  CHECK(ex.expected.truncated_mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact and null-vector routes agree on random models") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const MRWSpec spec = model_zoo("random_lattice", {{"seed", seed}});
    const ExactPipeline ex = run_exact_pipeline(spec);
    double sum = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      CHECK(std::abs(ex.exact.pi_ladder[i] - ex.nullvector.ladder.pi_ladder[i]) <= 1e-8);
      CHECK(std::abs(ex.exact.pi_ladder[i] - ex.direct.pi_ladder[i]) <= 1e-8);
      CHECK(ex.exact.c * ex.exact.pi_ladder[i] <= ex.pi.pi(static_cast<Eigen::Index>(i)) + 1e-10);
      sum += ex.exact.pi_ladder[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ex.nullvector.stationarity_residual <= 1e-9);
    CHECK(ex.direct.nullity_on_support == 1);
  }
}

TEST_CASE("cross validation passes on the closed-form models") {
  for (const char* name : {"two_cycle", "simple_rw"}) {
    const MRWSpec spec = model_zoo(name, json::object());
    const ExactPipeline ex = run_exact_pipeline(spec);
    const VerificationReport rep = cross_validate(spec, ex, small_mc(3));
    for (const auto& c : rep.checks) {
      INFO(name << " " << c.id << " lhs=" << c.lhs << " rhs=" << c.rhs);
      CHECK(c.pass);
    }
    CHECK(rep.all_pass);
  }
}

TEST_CASE("cross validation passes on a random model") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 77}});
  const VerificationReport rep = cross_validate(spec, run_exact_pipeline(spec), small_mc(5));
  for (const auto& c : rep.checks) {
    INFO(c.id << " lhs=" << c.lhs << " rhs=" << c.rhs << " tol=" << c.tolerance);
    CHECK(c.pass);
  }
}

TEST_CASE("an injected kernel perturbation is detected") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 77}});
  ExactOptions opts;
  opts.perturbation = 1e-6;
  const VerificationReport rep = cross_validate(spec, run_exact_pipeline(spec, opts), small_mc(5));
  CHECK(!rep.all_pass);
  CHECK(!find(rep, "wiener_hopf_factorization").pass);
  CHECK(!find(rep, "mass_factorization").pass);
}

TEST_CASE("zero drift is reported as non-convergence") {
  const MRWSpec spec = model_zoo("remark2", json::object());
  CHECK_THROWS_AS(run_exact_pipeline(spec), NonConvergenceError);
  ExactOptions opts;
  opts.assume_dual_divergence = true;
  opts.truncation.max_depth = 1 << 10;
  CHECK_THROWS_AS(run_exact_pipeline(spec, opts), NonConvergenceError);
}

TEST_CASE("negative null vector entries are rejected") {
  StationaryDistribution pi{Eigen::Vector2d(0.5, 0.5)};
  Eigen::MatrixXd star(2, 2);
  star << 0.0, 1.5, 0.0, 0.0;
  CHECK_THROWS_AS(ladder_stationary_nullvector(Eigen::MatrixXd::Zero(2, 2), star, pi),
                  NonConvergenceError);
}
