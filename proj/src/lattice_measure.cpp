#include "mrwlab/lattice_measure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace mrwlab {

namespace {

bool spans_equal(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

}  // namespace

LatticeMeasure::LatticeMeasure(double span, std::int64_t offset,
                               std::vector<double> weights)
    : span_(span), offset_(offset), weights_(std::move(weights)) {
  if (!(span > 0.0) || !std::isfinite(span)) {
    throw std::invalid_argument("lattice span must be positive and finite");
  }
  trim(0.0);
}

LatticeMeasure LatticeMeasure::zero(double span) {
  return LatticeMeasure(span, 0, {});
}

LatticeMeasure LatticeMeasure::dirac(double span, std::int64_t index,
                                     double mass) {
  return LatticeMeasure(span, index, {mass});
}

double LatticeMeasure::weight_at(std::int64_t index) const noexcept {
  if (weights_.empty() || index < min_index() || index > max_index()) {
    return 0.0;
  }
  return weights_[static_cast<std::size_t>(index - offset_)];
}

double LatticeMeasure::total_mass() const noexcept {
  double s = 0.0;
  for (double w : weights_) s += w;
  return s;
}

double LatticeMeasure::total_variation() const noexcept {
  double s = 0.0;
  for (double w : weights_) s += std::abs(w);
  return s;
}

double LatticeMeasure::first_moment() const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    s += weights_[k] * static_cast<double>(offset_ + static_cast<std::int64_t>(k));
  }
  return s * span_;
}

bool LatticeMeasure::same_span(const LatticeMeasure& other) const noexcept {
  return spans_equal(span_, other.span_);
}

void LatticeMeasure::accumulate(const LatticeMeasure& other, double sign) {
  if (!same_span(other)) {
    throw std::invalid_argument("lattice span mismatch");
  }
  if (other.is_zero()) return;
  if (is_zero()) {
    offset_ = other.offset_;
    weights_.assign(other.weights_.size(), 0.0);
  }
  const std::int64_t lo = std::min(min_index(), other.min_index());
  const std::int64_t hi = std::max(max_index(), other.max_index());
  if (lo < offset_ || hi > max_index()) {
    std::vector<double> grown(static_cast<std::size_t>(hi - lo + 1), 0.0);
    std::copy(weights_.begin(), weights_.end(),
              grown.begin() + (offset_ - lo));
    weights_ = std::move(grown);
    offset_ = lo;
  }
  const std::size_t shift = static_cast<std::size_t>(other.offset_ - offset_);
  for (std::size_t k = 0; k < other.weights_.size(); ++k) {
    weights_[shift + k] += sign * other.weights_[k];
  }
  trim();
}

LatticeMeasure& LatticeMeasure::operator+=(const LatticeMeasure& other) {
  accumulate(other, 1.0);
  return *this;
}

LatticeMeasure& LatticeMeasure::operator-=(const LatticeMeasure& other) {
  accumulate(other, -1.0);
  return *this;
}

LatticeMeasure& LatticeMeasure::operator*=(double factor) {
  for (double& w : weights_) w *= factor;
  trim();
  return *this;
}

void LatticeMeasure::trim(double threshold) {
  std::size_t first = 0;
  while (first < weights_.size() && std::abs(weights_[first]) <= threshold) {
    ++first;
  }
  if (first == weights_.size()) {
    weights_.clear();
    offset_ = 0;
    return;
  }
  std::size_t last = weights_.size();
  while (std::abs(weights_[last - 1]) <= threshold) --last;
  if (first > 0 || last < weights_.size()) {
    weights_ = std::vector<double>(weights_.begin() + first,
                                   weights_.begin() + last);
    offset_ += static_cast<std::int64_t>(first);
  }
}

LatticeMeasure operator+(LatticeMeasure a, const LatticeMeasure& b) {
  a += b;
  return a;
}

LatticeMeasure operator-(LatticeMeasure a, const LatticeMeasure& b) {
  a -= b;
  return a;
}

LatticeMeasure operator*(double factor, LatticeMeasure a) {
  a *= factor;
  return a;
}

LatticeMeasure convolve(const LatticeMeasure& a, const LatticeMeasure& b) {
  if (!a.same_span(b)) {
    throw std::invalid_argument("convolve: lattice span mismatch");
  }
  if (a.is_zero() || b.is_zero()) return LatticeMeasure::zero(a.span());
  const auto& wa = a.weights();
  const auto& wb = b.weights();
  std::vector<double> out(wa.size() + wb.size() - 1, 0.0);
  for (std::size_t i = 0; i < wa.size(); ++i) {
    if (wa[i] == 0.0) continue;
    for (std::size_t j = 0; j < wb.size(); ++j) {
      out[i + j] += wa[i] * wb[j];
    }
  }
  LatticeMeasure result(a.span(), a.offset() + b.offset(), std::move(out));
  result.trim();
  return result;
}

KernelMatrix::KernelMatrix(std::size_t dim, double span)
    : dim_(dim), span_(span), entries_(dim * dim, LatticeMeasure::zero(span)) {}

KernelMatrix KernelMatrix::zero(std::size_t dim, double span) {
  return KernelMatrix(dim, span);
}

KernelMatrix KernelMatrix::identity(std::size_t dim, double span) {
  KernelMatrix k(dim, span);
  for (std::size_t i = 0; i < dim; ++i) k(i, i) = LatticeMeasure::dirac(span, 0);
  return k;
}

void KernelMatrix::check_compatible(const KernelMatrix& other) const {
  if (dim_ != other.dim_) {
    throw std::invalid_argument("kernel dimension mismatch: " +
                                std::to_string(dim_) + " vs " +
                                std::to_string(other.dim_));
  }
  if (!spans_equal(span_, other.span_)) {
    throw std::invalid_argument("kernel span mismatch");
  }
}

KernelMatrix& KernelMatrix::operator+=(const KernelMatrix& other) {
  check_compatible(other);
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += other.entries_[k];
  return *this;
}

KernelMatrix& KernelMatrix::operator-=(const KernelMatrix& other) {
  check_compatible(other);
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= other.entries_[k];
  return *this;
}

KernelMatrix operator+(KernelMatrix a, const KernelMatrix& b) {
  a += b;
  return a;
}

KernelMatrix operator-(KernelMatrix a, const KernelMatrix& b) {
  a -= b;
  return a;
}

KernelMatrix matrix_convolve(const KernelMatrix& a, const KernelMatrix& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("matrix_convolve: dimension mismatch");
  }
  if (!spans_equal(a.span(), b.span())) {
    throw std::invalid_argument("matrix_convolve: span mismatch");
  }
  const std::size_t m = a.dim();
  KernelMatrix out(m, a.span());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      LatticeMeasure acc = LatticeMeasure::zero(a.span());
      for (std::size_t k = 0; k < m; ++k) {
        if (a(i, k).is_zero() || b(k, j).is_zero()) continue;
        acc += convolve(a(i, k), b(k, j));
      }
      out(i, j) = std::move(acc);
    }
  }
  return out;
}

MassMatrix total_mass_matrix(const KernelMatrix& a) {
  MassMatrix m(a.dim(), a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = 0; j < a.dim(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          a(i, j).total_mass();
    }
  }
  return m;
}

double max_entry_total_variation(const KernelMatrix& a, const KernelMatrix& b) {
  const KernelMatrix diff = a - b;
  double worst = 0.0;
  for (std::size_t i = 0; i < diff.dim(); ++i) {
    for (std::size_t j = 0; j < diff.dim(); ++j) {
      worst = std::max(worst, diff(i, j).total_variation());
    }
  }
  return worst;
}

nlohmann::json to_json(const LatticeMeasure& m) {
  return {{"span", m.span()}, {"offset", m.offset()}, {"weights", m.weights()}};
}

LatticeMeasure measure_from_json(const nlohmann::json& j) {
  return LatticeMeasure(j.at("span").get<double>(),
                        j.at("offset").get<std::int64_t>(),
                        j.at("weights").get<std::vector<double>>());
}

nlohmann::json to_json(const KernelMatrix& k) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < k.dim(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < k.dim(); ++j) row.push_back(to_json(k(i, j)));
    rows.push_back(std::move(row));
  }
  return {{"dim", k.dim()}, {"span", k.span()}, {"entries", std::move(rows)}};
}

}  // namespace mrwlab
