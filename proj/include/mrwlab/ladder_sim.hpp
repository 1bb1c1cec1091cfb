#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrwlab/model.hpp"
#include "mrwlab/rng.hpp"

namespace mrwlab {

// Simulated trajectory. For lattice models partial sums are exact lattice
// indices times the span, so order comparisons between them are exact.
struct PathSample {
  std::size_t initial_state = 0;
  std::vector<std::size_t> states;      // M_0..M_n
  std::vector<double> increments;       // X_1..X_n
  std::vector<double> partial_sums;     // S_0..S_n, S_0 = 0
  std::uint64_t seed = 0;

  std::size_t steps() const noexcept { return increments.size(); }
};

// Ladder epochs of a finite path, starting with epoch 0.
struct LadderExtraction {
  std::vector<std::size_t> epochs;
  std::vector<std::size_t> states;
  std::vector<double> heights;
  // True when the path ends exactly at a ladder epoch, i.e. no excursion is
  // censored by the horizon.
  bool complete = true;
};

struct MCEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t replicates = 0;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
};

// Mean and standard error (sample std / sqrt(n)) of replicate values.
MCEstimate summarize_replicates(const std::vector<double>& values);

// Draws (next state, lattice increment) pairs from the rows of a spec.
class StepSampler {
 public:
  explicit StepSampler(const MRWSpec& spec);

  struct Step {
    std::size_t next;
    std::int64_t jump;
  };
  Step sample(std::size_t state, Rng& rng) const;

 private:
  struct Outcome {
    double cumulative;
    std::size_t next;
    std::int64_t jump;
  };
  std::vector<std::vector<Outcome>> rows_;
};

PathSample simulate_path(const MRWSpec& spec, std::size_t initial_state,
                         std::size_t n_steps, std::uint64_t seed);

// sigma_n = inf{k > sigma_{n-1} : S_k > S_{sigma_{n-1}}}.
LadderExtraction extract_strict_ascending(const PathSample& path);
// sigma_n = inf{k > sigma_{n-1} : S_k <= S_{sigma_{n-1}}}.
LadderExtraction extract_weak_descending(const PathSample& path);

// Between consecutive strict ascending epochs every partial sum stays at or
// below the previous ladder height, and heights strictly increase.
bool ladder_maximality_holds(const PathSample& path,
                             const LadderExtraction& ladder);

// Throws ConfigError unless the stationary drift is positive or the caller
// asserts positive divergence of the dual walk.
void require_divergence(const MRWSpec& spec, bool assume_dual_divergence);

struct OccupationEstimate {
  std::vector<MCEstimate> per_state;
  // False when some replicate hit max_steps before collecting its epochs; the
  // estimate then uses the epochs that were observed.
  bool complete = true;
  std::size_t incomplete_replicates = 0;
};

// Empirical occupation of ladder states over ladder indices
// burn_in+1 .. burn_in+n_ladder, one frequency vector per replicate.
OccupationEstimate estimate_ladder_occupation(const MRWSpec& spec,
                                              std::size_t initial_state,
                                              std::size_t n_ladder,
                                              std::size_t burn_in,
                                              std::uint64_t seed,
                                              std::size_t reps,
                                              std::size_t max_steps,
                                              bool assume_dual_divergence = false);

// Per state i: P(M_0 = i, min_{1<=n<=n_back} #S_n > 0) with M_0 ~ pi and a
// dual path of n_back steps. Upward biased; non-increasing in n_back for a
// fixed seed.
std::vector<MCEstimate> estimate_sigma0_probability(const MRWSpec& spec,
                                                    const StationaryDistribution& pi,
                                                    std::size_t n_back,
                                                    std::uint64_t seed,
                                                    std::size_t reps);

struct CouplingReport {
  bool coupled = false;  // T reached within horizon
  std::size_t coupling_time = 0;
  double y_first = 0.0;   // max_{n<=T} S'_n
  double y_second = 0.0;  // max_{n<=T} S''_n
  double y = 0.0;
  std::optional<std::size_t> tau;
  std::optional<std::size_t> rho;
  std::optional<std::size_t> first_common_ladder_epoch;
  std::size_t compared_epochs = 0;
  bool matched_tail = false;
};

// Independent chains from i and j until they meet, the spliced walk, and a
// comparison of ladder-epoch sets beyond tau / rho.
CouplingReport coupling_experiment(const MRWSpec& spec, std::size_t first_state,
                                   std::size_t second_state, std::size_t horizon,
                                   std::uint64_t seed);

// S-increments between successive strict ascending ladder epochs with ladder
// state s.
std::vector<double> embedded_renewal(const PathSample& path, std::size_t state);

// Fraction of replicates whose ladder chain enters `support` at some ladder
// index n >= 1 within `horizon` steps.
MCEstimate first_hit_ladder_support(const MRWSpec& spec,
                                    const std::vector<bool>& support,
                                    std::size_t initial_state,
                                    std::size_t horizon, std::uint64_t seed,
                                    std::size_t reps);

// Petal law of the flower chain: p_0i = (1 - ratio) ratio^(i-1), i >= 1.
// ratio = 1/2 gives p_0i = 2^-i.
struct FlowerWeights {
  double ratio = 0.5;

  double prob(std::uint64_t petal) const;
  double inverse_prob(std::uint64_t petal) const;
  std::uint64_t sample(Rng& rng) const;
  // P(1/p_0I >= threshold).
  double tail_inverse_at_least(double threshold) const;
};

// Flower walk under P_0 on the infinite state space, states created lazily
// (0 is the hub, i >= 1 the petals). dual = true simulates the time-reversed
// walk.
PathSample simulate_flower(const FlowerWeights& weights, std::size_t n_steps,
                           std::uint64_t seed, bool dual = false);

struct FlowerAudit {
  std::size_t steps_checked = 0;
  std::size_t formula_failures = 0;
  std::size_t lower_bound_failures = 0;  // dual only: #S_n >= n - 1
};

// Checks S_n = n (n even) and S_n = n - 1 - 1/p_0M_n (n odd); for the dual
// #S_n = n + 1 + 1/p_0M_n (n odd) and #S_n >= n - 1 at every step.
FlowerAudit audit_flower_path(const PathSample& path,
                              const FlowerWeights& weights, bool dual);

// P_0(min_{1<=n<=N} S_n <= -B), from independence of odd-step petal draws.
double flower_min_tail_probability(const FlowerWeights& weights, std::size_t horizon,
                                   double depth);

MCEstimate estimate_flower_min_tail(const FlowerWeights& weights,
                                    std::size_t horizon, double depth,
                                    std::uint64_t seed, std::size_t reps);

}  // namespace mrwlab
