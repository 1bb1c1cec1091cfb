#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mrwlab/lattice_measure.hpp"

namespace mrwlab {

inline constexpr double kValidationTol = 1e-12;
inline constexpr double kSolveTol = 1e-10;

// Increment distribution as given in a model description: real support
// points (units of S) with matching probabilities.
struct IncrementLaw {
  std::vector<double> support;
  std::vector<double> weights;
};

struct RawTransition {
  std::string from;
  std::string to;
  double prob = 0.0;
  IncrementLaw increment;
};

// Unvalidated model description, as parsed from JSON or built by a generator.
struct RawModel {
  std::vector<std::string> states;
  std::vector<RawTransition> transitions;
  double lattice_span = 1.0;
};

// Validated Markov random walk: finite irreducible driving chain with
// transition matrix P and lattice increment laws F_ij. Immutable.
class MRWSpec {
 public:
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& state_names() const noexcept { return names_; }
  const Eigen::MatrixXd& transition() const noexcept { return transition_; }
  double prob(std::size_t i, std::size_t j) const {
    return transition_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  // F_ij as a probability measure; the zero measure where p_ij = 0.
  const LatticeMeasure& increment(std::size_t i, std::size_t j) const {
    return increments_[i * size() + j];
  }
  double lattice_span() const noexcept { return span_; }

  // Index of a state by name; throws ModelError when unknown.
  std::size_t index_of(const std::string& name) const;

  // Largest |k| over all lattice support points.
  std::int64_t max_abs_jump() const noexcept;
  std::int64_t max_up_jump() const noexcept;    // max(0, largest index)
  std::int64_t max_down_jump() const noexcept;  // max(0, -smallest index)

  // Builds and validates a spec from dense parts. increments is row-major
  // m*m; entries with p_ij = 0 are ignored.
  static MRWSpec from_parts(std::vector<std::string> names,
                            Eigen::MatrixXd transition,
                            std::vector<LatticeMeasure> increments,
                            double span);

 private:
  MRWSpec() = default;

  std::vector<std::string> names_;
  Eigen::MatrixXd transition_;
  std::vector<LatticeMeasure> increments_;
  double span_ = 1.0;
};

struct StationaryDistribution {
  Eigen::VectorXd pi;
};

struct DriftReport {
  double mu = 0.0;
  bool exists = true;
};

// Validates a raw description and re-indexes states densely. Throws
// ModelError naming the offending row, transition or support point.
MRWSpec validate_spec(const RawModel& raw);

// Solves pi P = pi, sum(pi) = 1 by a dense direct solve.
StationaryDistribution stationary_distribution(const MRWSpec& spec);

DriftReport stationary_drift(const MRWSpec& spec,
                             const StationaryDistribution& pi);

// Time-reversed model: p#_ij = pi_j p_ji / pi_i with increment law F_ji.
MRWSpec build_dual(const MRWSpec& spec, const StationaryDistribution& pi);

// Stationary law of (M_n, X_n): for each target state i the measure
// sum_j pi_j p_ji F_ji.
std::vector<LatticeMeasure> stationary_increment_law(
    const MRWSpec& spec, const StationaryDistribution& pi);

// One-step kernel G with G_ij = p_ij F_ij.
KernelMatrix step_kernel(const MRWSpec& spec);

// Named example models: two_cycle, simple_rw, remark2, flower_truncated,
// random_lattice. Throws ConfigError for unknown names or bad parameters.
MRWSpec model_zoo(const std::string& name, const nlohmann::json& params);

RawModel raw_model_from_json(const nlohmann::json& j);
// Canonical form: states in index order, transitions in row-major order,
// support points ascending with zero weights dropped.
nlohmann::json to_json(const MRWSpec& spec);

}  // namespace mrwlab
