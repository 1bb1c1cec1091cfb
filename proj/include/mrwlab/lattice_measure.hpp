#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mrwlab {

// Weights below this magnitude at either end of the support are dropped
// after arithmetic.
inline constexpr double kTrimThreshold = 1e-15;

// Finitely supported signed measure on the lattice {k * span : k integer}.
// Stored densely over [offset, offset + weights.size()).
class LatticeMeasure {
 public:
  // Zero measure on the unit lattice.
  LatticeMeasure() = default;
  LatticeMeasure(double span, std::int64_t offset, std::vector<double> weights);

  static LatticeMeasure zero(double span);
  static LatticeMeasure dirac(double span, std::int64_t index,
                              double mass = 1.0);

  double span() const noexcept { return span_; }
  std::int64_t offset() const noexcept { return offset_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  bool is_zero() const noexcept { return weights_.empty(); }
  // Lattice index range of the support. Undefined for the zero measure.
  std::int64_t min_index() const noexcept { return offset_; }
  std::int64_t max_index() const noexcept {
    return offset_ + static_cast<std::int64_t>(weights_.size()) - 1;
  }

  double weight_at(std::int64_t index) const noexcept;
  double total_mass() const noexcept;
  // Sum of |w|; the total-variation norm of a signed measure.
  double total_variation() const noexcept;
  // First moment in units of S (lattice index times span).
  double first_moment() const noexcept;

  LatticeMeasure& operator+=(const LatticeMeasure& other);
  LatticeMeasure& operator-=(const LatticeMeasure& other);
  LatticeMeasure& operator*=(double factor);

  // Drops near-zero weights at both ends.
  void trim(double threshold = kTrimThreshold);

  bool same_span(const LatticeMeasure& other) const noexcept;

 private:
  void accumulate(const LatticeMeasure& other, double sign);

  double span_ = 1.0;
  std::int64_t offset_ = 0;
  std::vector<double> weights_;
};

LatticeMeasure operator+(LatticeMeasure a, const LatticeMeasure& b);
LatticeMeasure operator-(LatticeMeasure a, const LatticeMeasure& b);
LatticeMeasure operator*(double factor, LatticeMeasure a);

// Exact discrete convolution. Throws std::invalid_argument on span mismatch.
LatticeMeasure convolve(const LatticeMeasure& a, const LatticeMeasure& b);

using MassMatrix = Eigen::MatrixXd;

// Square matrix whose entries are lattice measures sharing one span.
class KernelMatrix {
 public:
  KernelMatrix() = default;
  KernelMatrix(std::size_t dim, double span);

  static KernelMatrix zero(std::size_t dim, double span);
  // delta_0 * I
  static KernelMatrix identity(std::size_t dim, double span);

  std::size_t dim() const noexcept { return dim_; }
  double span() const noexcept { return span_; }

  LatticeMeasure& operator()(std::size_t i, std::size_t j) {
    return entries_[i * dim_ + j];
  }
  const LatticeMeasure& operator()(std::size_t i, std::size_t j) const {
    return entries_[i * dim_ + j];
  }

  KernelMatrix& operator+=(const KernelMatrix& other);
  KernelMatrix& operator-=(const KernelMatrix& other);

 private:
  void check_compatible(const KernelMatrix& other) const;

  std::size_t dim_ = 0;
  double span_ = 1.0;
  std::vector<LatticeMeasure> entries_;
};

KernelMatrix operator+(KernelMatrix a, const KernelMatrix& b);
KernelMatrix operator-(KernelMatrix a, const KernelMatrix& b);

// (A*B)_ij = sum_k A_ik * B_kj. Throws std::invalid_argument on dimension or
// span mismatch.
KernelMatrix matrix_convolve(const KernelMatrix& a, const KernelMatrix& b);

// Entrywise total mass.
MassMatrix total_mass_matrix(const KernelMatrix& a);

// Largest entrywise total variation of a - b.
double max_entry_total_variation(const KernelMatrix& a, const KernelMatrix& b);

nlohmann::json to_json(const LatticeMeasure& m);
LatticeMeasure measure_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KernelMatrix& k);

}  // namespace mrwlab
