#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrwlab/ladder_sim.hpp"
#include "mrwlab/lattice_measure.hpp"
#include "mrwlab/model.hpp"
#include "mrwlab/wiener_hopf.hpp"

namespace mrwlab {

// States with pi^>_i above this are in the ladder support.
inline constexpr double kSupportThreshold = 1e-9;

// Stationary law of the ladder chain with its normalizing constant and the
// enclosures inherited from the escape brackets.
struct LadderStationary {
  std::vector<double> pi_ladder;
  std::vector<double> pi_ladder_lower;
  std::vector<double> pi_ladder_upper;
  double c = 0.0;
  double c_lower = 0.0;
  double c_upper = 0.0;
  std::vector<bool> support;
  std::vector<double> density;  // pi^>_i / pi_i
  // pi_i P_i(#sigma<= = infinity), enclosed.
  std::vector<double> weighted_escape_lower;
  std::vector<double> weighted_escape_upper;
};

// pi^>_i = pi_i P_i(#sigma<= = inf) / c with c = P_pi(#sigma<= = inf), using
// bracket midpoints. Throws NonConvergenceError when the c enclosure reaches 0.
LadderStationary ladder_stationary_exact(const MRWSpec& spec,
                                         const StationaryDistribution& pi,
                                         const EscapeProbabilities& escape);

struct NullVectorResult {
  LadderStationary ladder;
  double stationarity_residual = 0.0;  // ||v (I - ||G^>||)||_inf, normalized v
  double most_negative_entry = 0.0;    // before clamping
};

// v = pi^T (I - ||*G||), normalized; checked against x (I - ||G^>||) = 0.
// Throws NonConvergenceError when v has an entry below -1e-9 or vanishes.
NullVectorResult ladder_stationary_nullvector(const MassMatrix& ascending_mass,
                                              const MassMatrix& star_desc_mass,
                                              const StationaryDistribution& pi);

// Left null vector of I - ||G^>|| from its singular value decomposition, and
// the nullity of I - ||G^>|| restricted to `support`.
struct DirectLadderStationary {
  std::vector<double> pi_ladder;
  std::vector<bool> support;
  std::size_t nullity_on_support = 0;
};

DirectLadderStationary ladder_stationary_direct(const MassMatrix& ascending_mass,
                                                const std::vector<bool>& support);

// P_lambda(sigma^> = m) for m = 1..steps by a time-indexed level recursion
// censored below -depth. Stops early once the surviving mass is negligible.
std::vector<double> ladder_epoch_law(const MRWSpec& spec,
                                     const std::vector<double>& initial,
                                     std::size_t m_max, std::int64_t depth);

struct NuTable {
  // nu[i][m-1] = pi^>_i P_i(sigma^> = m)
  std::vector<std::vector<double>> nu;
  std::vector<std::vector<double>> first_passage;  // P_i(sigma^> = m)
  std::vector<double> state_defect;                // pi^>_i - sum_m nu_im
  double defect = 0.0;
  std::size_t steps = 0;
};

NuTable joint_law_nu(const MRWSpec& spec, const LadderStationary& ladder,
                     std::size_t m_max, std::int64_t depth);

struct ExpectedEpochReport {
  double truncated_mean = 0.0;  // sum_m m P_pi^>(sigma^> = m), m <= steps
  double tail_mass = 0.0;
  double identity_value = 0.0;  // 1 / c
  double identity_lower = 0.0;
  double identity_upper = 0.0;
  std::vector<double> per_state_lower;  // truncated E_i sigma^>
  std::vector<double> per_state_bound;  // 1 / (pi_i P_i(escape)), inf off S^>
  std::vector<bool> bound_holds;
};

ExpectedEpochReport expected_ladder_epoch(const LadderStationary& ladder,
                                          const NuTable& nu);

struct ExactOptions {
  TruncationOptions truncation;
  std::size_t m_max = 20000;
  bool assume_dual_divergence = false;
  // Test mode: mass added to G^>_00 at height +1 to exercise the detectors.
  double perturbation = 0.0;
};

// All exact quantities of the ladder pipeline for one model.
struct ExactPipeline {
  StationaryDistribution pi;
  DriftReport drift;
  std::optional<MRWSpec> dual;
  KernelMatrix step;
  LadderKernelResult ascending;
  LadderKernelResult descending;
  EscapeProbabilities escape;
  KernelMatrix star;
  FactorizationReport factorization;
  SubstochasticReport substochastic;
  LadderStationary exact;
  NullVectorResult nullvector;
  DirectLadderStationary direct;
  NuTable nu;
  std::vector<double> marginal_law;  // P_pi^>(sigma^> = m) from the recursion
  ExpectedEpochReport expected;
};

// Throws NonConvergenceError when the stationary drift is not positive (unless
// assume_dual_divergence) or when a truncation bracket fails to close.
ExactPipeline run_exact_pipeline(const MRWSpec& spec, const ExactOptions& options = {});

struct MonteCarloOptions {
  std::uint64_t seed = 0;
  std::size_t initial_state = 0;
  std::size_t occupation_reps = 20;
  std::size_t n_ladder = 5000;
  std::size_t burn_in = 50;
  std::size_t max_steps = 100'000'000;
  std::size_t sigma0_reps = 20000;
  std::size_t n_back = 2000;
  std::size_t first_hit_reps = 100;
  std::size_t first_hit_horizon = 100000;
};

struct IdentityCheck {
  std::string id;
  std::string description;
  std::string relation;  // "eq": |lhs - rhs| <= tol; "le": lhs <= rhs + tol
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::vector<IdentityCheck> checks;
  OccupationEstimate occupation;
  std::vector<MCEstimate> sigma0;
  std::vector<MCEstimate> first_hit;
  bool all_pass = false;
};

// Checks every identity of the ladder theory against the exact pipeline and
// the Monte Carlo estimators.
VerificationReport cross_validate(const MRWSpec& spec, const ExactPipeline& exact,
                                  const MonteCarloOptions& mc);

nlohmann::json to_json(const IdentityCheck& check);

}  // namespace mrwlab
