#include <cmath>
#include <functional>
#include <map>

#include "doctest.h"
#include "mrwlab/error.hpp"
#include "mrwlab/wiener_hopf.hpp"

using namespace mrwlab;
using nlohmann::json;

namespace {

struct Enumerated {
  std::map<std::int64_t, double> absorbed;  // by height
  double unresolved = 0.0;                   // paths still running at the horizon
};

// Every path of the simple walk up to `horizon` steps, branch by branch.
Enumerated enumerate_simple(double p, int horizon, bool ascending) {
  Enumerated out;
  std::function<void(int, std::int64_t, double)> walk = [&](int step, std::int64_t level,
                                                            double w) {
    if (step > 0) {
      if (ascending ? level > 0 : level <= 0) {
        out.absorbed[level] += w;
        return;
      }
    }
    if (step == horizon) {
      out.unresolved += w;
      return;
    }
    walk(step + 1, level + 1, w * p);
    walk(step + 1, level - 1, w * (1.0 - p));
  };
  walk(0, 0, 1.0);
  return out;
}

// First-passage kernel by forward iteration in time (independent of the
// linear solve). Entry [i][j] maps heights to mass.
std::vector<std::vector<std::map<std::int64_t, double>>> forward_ascending(const MRWSpec& spec,
                                                                           int steps,
                                                                           std::int64_t floor) {
  const std::size_t m = spec.size();
  std::vector<std::vector<std::map<std::int64_t, double>>> out(
      m, std::vector<std::map<std::int64_t, double>>(m));
  for (std::size_t i = 0; i < m; ++i) {
    std::map<std::pair<std::int64_t, std::size_t>, double> alive{{{0, i}, 1.0}};
    for (int t = 0; t < steps && !alive.empty(); ++t) {
      std::map<std::pair<std::int64_t, std::size_t>, double> next;
      for (const auto& [key, w] : alive) {
        for (std::size_t j = 0; j < m; ++j) {
          const double pij = spec.prob(key.second, j);
          if (pij == 0.0) continue;
          const LatticeMeasure& f = spec.increment(key.second, j);
          for (std::int64_t k = f.min_index(); k <= f.max_index(); ++k) {
            const double v = w * pij * f.weight_at(k);
            if (v == 0.0) continue;
            const std::int64_t to = key.first + k;
            if (to > 0) {
              out[i][j][to] += v;
            } else if (to >= floor) {
              next[{to, j}] += v;
            }
          }
        }
      }
      alive.swap(next);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("simple walk ladder kernels match the classical formulas") {
  const MRWSpec spec = model_zoo("simple_rw", {{"p", 0.6}});
  const LadderKernelResult asc = strict_ascending_kernel(spec);
  CHECK(asc.converged);
  CHECK(asc.kernel(0, 0).min_index() == 1);
  CHECK(asc.kernel(0, 0).max_index() == 1);
  CHECK(asc.kernel(0, 0).weight_at(1) == doctest::Approx(1.0).epsilon(1e-9));

  const MRWSpec dual = build_dual(spec, stationary_distribution(spec));
  const LadderKernelResult desc = weak_descending_kernel(dual);
  CHECK(desc.kernel(0, 0).weight_at(0) == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(desc.kernel(0, 0).weight_at(-1) == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(desc.kernel(0, 0).min_index() == -1);
  CHECK(desc.kernel(0, 0).max_index() == 0);
}

TEST_CASE("simple walk kernels bracket the exhaustive path enumeration") {
  const double p = 0.6;
  const MRWSpec spec = model_zoo("simple_rw", {{"p", p}});
  const int horizon = 24;
  const Enumerated up = enumerate_simple(p, horizon, true);
  const LadderKernelResult asc = strict_ascending_kernel(spec);
  for (const auto& [h, w] : up.absorbed) {
    const double k = asc.kernel(0, 0).weight_at(h);
    CHECK(k >= w - 1e-12);
    CHECK(k <= w + up.unresolved + 1e-12);
  }
  const Enumerated down = enumerate_simple(p, horizon, false);
  const LadderKernelResult desc =
      weak_descending_kernel(build_dual(spec, stationary_distribution(spec)));
  for (const auto& [h, w] : down.absorbed) {
    const double k = desc.kernel(0, 0).weight_at(h);
    CHECK(k >= w - 1e-12);
    CHECK(k <= w + down.unresolved + 1e-12);
  }
}

TEST_CASE("two-cycle kernels by hand") {
  const MRWSpec spec = model_zoo("two_cycle", json::object());
  const std::size_t a = spec.index_of("a");
  const std::size_t b = spec.index_of("b");
  const StationaryDistribution pi = stationary_distribution(spec);
  const LadderKernelResult asc = strict_ascending_kernel(spec);
  CHECK(asc.kernel(a, b).weight_at(2) == 1.0);
  CHECK(asc.kernel(b, b).weight_at(1) == 1.0);
  CHECK(asc.kernel(a, a).is_zero());
  CHECK(asc.kernel(b, a).is_zero());

  const LadderKernelResult desc = weak_descending_kernel(build_dual(spec, pi));
  CHECK(desc.kernel(a, b).weight_at(-1) == 1.0);
  CHECK(desc.row_mass()[b] == 0.0);
  const KernelMatrix star = star_kernel(desc.kernel, pi);
  CHECK(star(b, a).weight_at(-1) == 1.0);

  const FactorizationReport f = verify_factorization(step_kernel(spec), star, asc.kernel);
  CHECK(f.max_entry_total_variation == 0.0);
  CHECK(f.mass_residual == 0.0);
}

TEST_CASE("ascending kernel agrees with forward time iteration") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 3}, {"m", 3}, {"max_jump", 2}});
  const LadderKernelResult asc = strict_ascending_kernel(spec);
  const auto fwd = forward_ascending(spec, 3000, -asc.truncation_depth);
  double worst = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      for (const auto& [h, w] : fwd[i][j]) {
        worst = std::max(worst, std::abs(asc.kernel(i, j).weight_at(h) - w));
      }
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("probability conservation of the absorbing systems") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 9}});
  const MRWSpec dual = build_dual(spec, stationary_distribution(spec));
  for (const auto& res : {solve_ladder_system(spec, LadderDirection::kStrictAscending, 12),
                          solve_ladder_system(dual, LadderDirection::kWeakDescending, 12)}) {
    const auto mass = res.row_mass();
    for (std::size_t i = 0; i < spec.size(); ++i) {
      CHECK(mass[i] + res.row_defect[i] == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("defects shrink and masses grow as the depth doubles") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 12}});
  const MRWSpec dual = build_dual(spec, stationary_distribution(spec));
  for (LadderDirection dir : {LadderDirection::kStrictAscending, LadderDirection::kWeakDescending}) {
    const MRWSpec& s = dir == LadderDirection::kStrictAscending ? spec : dual;
    LadderKernelResult prev = solve_ladder_system(s, dir, 3);
    for (std::int64_t k = 6; k <= 192; k *= 2) {
      const LadderKernelResult cur = solve_ladder_system(s, dir, k);
      for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(cur.row_defect[i] <= prev.row_defect[i] + 1e-13);
        for (std::size_t j = 0; j < s.size(); ++j) {
          CHECK(cur.kernel(i, j).total_mass() >= prev.kernel(i, j).total_mass() - 1e-13);
        }
      }
      prev = cur;
    }
  }
}

TEST_CASE("factorization holds on random positive-drift models") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const MRWSpec spec = model_zoo("random_lattice", {{"seed", seed}, {"span", 0.25}});
    const StationaryDistribution pi = stationary_distribution(spec);
    const LadderKernelResult asc = strict_ascending_kernel(spec);
    const LadderKernelResult desc = weak_descending_kernel(build_dual(spec, pi));
    const FactorizationReport f =
        verify_factorization(step_kernel(spec), star_kernel(desc.kernel, pi), asc.kernel);
    CHECK(f.max_entry_total_variation <= 1e-9);
    CHECK(f.mass_residual <= 1e-9);
    const SubstochasticReport sub = check_substochastic(desc, pi);
    CHECK(sub.pass);
    CHECK(sub.column_residual <= 1e-9);
  }
}

TEST_CASE("descent bound of the simple walk") {
  const DescentBound b = descent_bound(model_zoo("simple_rw", {{"p", 0.6}}));
  CHECK(b.theta == doctest::Approx(std::log(1.5)).epsilon(1e-8));
  CHECK(std::abs(b.log_kappa) < 1e-9);
  CHECK(descent_bound(model_zoo("remark2", json::object())).theta == 0.0);
}

TEST_CASE("escape probabilities bracket the classical value") {
  const MRWSpec spec = model_zoo("simple_rw", {{"p", 0.6}});
  const EscapeProbabilities e = escape_probabilities(build_dual(spec, stationary_distribution(spec)));
  CHECK(e.lower[0] <= 0.2 + 1e-12);
  CHECK(e.upper[0] >= 0.2 - 1e-12);
  CHECK(e.max_width() < 1e-9);
}

TEST_CASE("all-positive increments: the dual never weakly descends") {
  RawModel raw;
  raw.states = {"u", "v"};
  raw.transitions = {{"u", "v", 0.5, {{1.0, 2.0}, {0.5, 0.5}}},
                     {"u", "u", 0.5, {{3.0}, {1.0}}},
                     {"v", "u", 1.0, {{1.0}, {1.0}}}};
  const MRWSpec spec = validate_spec(raw);
  const EscapeProbabilities e =
      escape_probabilities(build_dual(spec, stationary_distribution(spec)));
  CHECK(e.lower[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.lower[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero drift does not converge") {
  const MRWSpec spec = model_zoo("remark2", json::object());
  TruncationOptions o;
  o.max_depth = 1 << 10;
  CHECK_THROWS_AS(weak_descending_kernel(build_dual(spec, stationary_distribution(spec)), o),
                  NonConvergenceError);
}

TEST_CASE("step kernel mass equals P") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 30}});
  CHECK((total_mass_matrix(step_kernel(spec)) - spec.transition()).cwiseAbs().maxCoeff() <= 1e-15);
}
