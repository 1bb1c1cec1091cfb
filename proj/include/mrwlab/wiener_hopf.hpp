#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mrwlab/lattice_measure.hpp"
#include "mrwlab/model.hpp"

namespace mrwlab {

enum class LadderDirection {
  kStrictAscending,  // first S_k > 0; censored below -K
  kWeakDescending,   // first S_k <= 0, k >= 1; censored above +K
};

const char* to_string(LadderDirection d) noexcept;

// Ladder kernel of a level-truncated first-passage system.
struct LadderKernelResult {
  KernelMatrix kernel;
  std::vector<double> row_defect;  // censored mass per starting state
  std::int64_t truncation_depth = 0;
  LadderDirection direction = LadderDirection::kStrictAscending;
  // Weak descending only: upper bound on the probability that censored mass
  // later returns to level <= 0.
  double return_bound = 1.0;
  bool converged = false;

  std::vector<double> row_mass() const;
};

struct TruncationOptions {
  std::int64_t initial_depth = 0;  // 0: 4 * largest jump
  double tol = 1e-10;
  std::int64_t max_depth = std::int64_t{1} << 14;
};

// Exponential supermartingale bound P_i(inf_n S_n <= -L) <= kappa e^(-theta L)
// for a walk with positive drift; theta is the largest value with Perron root
// of (p_ij E e^(-theta X)) at most 1, kappa the ratio of the extreme entries
// of its Perron vector. theta = 0 (no decay) for non-positive drift.
struct DescentBound {
  double theta = 0.0;
  double log_kappa = 0.0;

  double at(std::int64_t levels) const;
};

DescentBound descent_bound(const MRWSpec& spec);

// One solve at fixed depth K. Transient levels are [-K, 0] (ascending) or
// [1, K] (descending).
LadderKernelResult solve_ladder_system(const MRWSpec& spec, LadderDirection direction,
                                       std::int64_t depth);

// G^>: doubles K until every row defect is below tol. Throws
// NonConvergenceError when max_depth is reached first.
LadderKernelResult strict_ascending_kernel(const MRWSpec& spec,
                                           const TruncationOptions& options = {});

// #G^<= on the dual model: doubles K until defect * return_bound < tol on
// every row. Throws NonConvergenceError when max_depth is reached first.
LadderKernelResult weak_descending_kernel(const MRWSpec& dual,
                                          const TruncationOptions& options = {});

// Certified enclosure of P_i(#sigma<= = infinity).
struct EscapeProbabilities {
  std::vector<double> lower;
  std::vector<double> upper;

  double max_width() const;
  double midpoint(std::size_t i) const { return 0.5 * (lower[i] + upper[i]); }
};

EscapeProbabilities escape_from_kernel(const LadderKernelResult& descending);
EscapeProbabilities escape_probabilities(const MRWSpec& dual,
                                         const TruncationOptions& options = {});

// *G_ij = (pi_j / pi_i) #G_ji.
KernelMatrix star_kernel(const KernelMatrix& descending,
                         const StationaryDistribution& pi);

struct FactorizationReport {
  double max_entry_total_variation = 0.0;
  std::vector<std::vector<double>> entry_residuals;
  double mass_residual = 0.0;
};

// Compares delta_0 I - G against (delta_0 I - *G)*(delta_0 I - G^>) entrywise
// in total variation, and the same identity on total masses.
FactorizationReport verify_factorization(const KernelMatrix& step,
                                         const KernelMatrix& star_descending,
                                         const KernelMatrix& ascending);

struct SubstochasticReport {
  std::vector<double> row_sums;        // sum_j ||#G_ij||
  bool rows_bounded = false;           // all <= 1 + tol
  bool strict_row = false;             // some < 1 - tol
  std::vector<double> column_mass;     // sum_i pi_i ||*G_ij||
  std::vector<double> column_lower;    // pi_j (1 - escape upper)
  std::vector<double> column_upper;    // pi_j (1 - escape lower)
  double column_residual = 0.0;        // max distance to the enclosure
  bool strict_column = false;          // some column_mass < pi_j - tol
  bool pass = false;
};

SubstochasticReport check_substochastic(const LadderKernelResult& descending,
                                        const StationaryDistribution& pi,
                                        double tol = 1e-10);

}  // namespace mrwlab
