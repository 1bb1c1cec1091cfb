#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "mrwlab/lattice_measure.hpp"

using namespace mrwlab;

namespace {

LatticeMeasure random_measure(std::mt19937_64& gen, double span, bool signed_weights = false) {
  std::uniform_int_distribution<int> off(-6, 6);
  std::uniform_int_distribution<int> len(1, 5);
  std::uniform_real_distribution<double> w(signed_weights ? -1.0 : 0.0, 1.0);
  std::vector<double> weights(static_cast<std::size_t>(len(gen)));
  for (double& x : weights) x = w(gen);
  return LatticeMeasure(span, off(gen), weights);
}

KernelMatrix random_kernel(std::mt19937_64& gen, std::size_t m, double span) {
  KernelMatrix k(m, span);
  std::bernoulli_distribution keep(0.7);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (keep(gen)) k(i, j) = random_measure(gen, span);
  return k;
}

// Convolution by explicit double sum over atoms.
std::map<std::int64_t, double> atoms_convolve(const LatticeMeasure& a, const LatticeMeasure& b) {
  std::map<std::int64_t, double> out;
  for (std::int64_t x = a.min_index(); x <= a.max_index(); ++x)
    for (std::int64_t y = b.min_index(); y <= b.max_index(); ++y)
      out[x + y] += a.weight_at(x) * b.weight_at(y);
  return out;
}

double max_diff(const LatticeMeasure& a, const LatticeMeasure& b) {
  return (a - b).total_variation();
}

}  // namespace

TEST_CASE("construction trims zero ends and rejects bad spans") {
  const LatticeMeasure m(1.0, -2, {0.0, 0.5, 0.0, 0.5, 0.0});
  CHECK(m.min_index() == -1);
  CHECK(m.max_index() == 1);
  CHECK(m.total_mass() == doctest::Approx(1.0));
  CHECK(m.weight_at(0) == 0.0);
  CHECK(m.weight_at(7) == 0.0);
  CHECK(LatticeMeasure(1.0, 3, {0.0, 0.0}).is_zero());
  CHECK_THROWS(LatticeMeasure(0.0, 0, {1.0}));
  CHECK_THROWS(LatticeMeasure(-1.0, 0, {1.0}));
}

TEST_CASE("dirac convolution shifts") {
  const LatticeMeasure a = LatticeMeasure::dirac(0.5, 3);
  const LatticeMeasure b = LatticeMeasure::dirac(0.5, -5);
  const LatticeMeasure c = convolve(a, b);
  CHECK(c.min_index() == -2);
  CHECK(c.max_index() == -2);
  CHECK(c.weight_at(-2) == 1.0);
  CHECK(c.first_moment() == doctest::Approx(-1.0));
}

TEST_CASE("convolution matches the atom-by-atom double sum") {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 50; ++t) {
    const LatticeMeasure a = random_measure(gen, 1.0, true);
    const LatticeMeasure b = random_measure(gen, 1.0, true);
    const LatticeMeasure c = convolve(a, b);
    for (const auto& [x, w] : atoms_convolve(a, b)) {
      CHECK(c.weight_at(x) == doctest::Approx(w).epsilon(1e-12));
    }
  }
}

TEST_CASE("convolution with the zero measure is zero") {
  const LatticeMeasure a(1.0, 0, {0.2, 0.8});
  CHECK(convolve(a, LatticeMeasure::zero(1.0)).is_zero());
}

TEST_CASE("span mismatch is rejected") {
  const LatticeMeasure a(1.0, 0, {1.0});
  const LatticeMeasure b(0.5, 0, {1.0});
  CHECK_THROWS_AS(convolve(a, b), std::invalid_argument);
  KernelMatrix k1 = KernelMatrix::identity(2, 1.0);
  KernelMatrix k2 = KernelMatrix::identity(2, 0.5);
  CHECK_THROWS_AS(matrix_convolve(k1, k2), std::invalid_argument);
  CHECK_THROWS_AS(matrix_convolve(k1, KernelMatrix::identity(3, 1.0)), std::invalid_argument);
}

TEST_CASE("total mass is multiplicative over 100 random kernel pairs") {
  std::mt19937_64 gen(2024);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + static_cast<std::size_t>(t % 4);
    const KernelMatrix a = random_kernel(gen, m, 1.0);
    const KernelMatrix b = random_kernel(gen, m, 1.0);
    const MassMatrix lhs = total_mass_matrix(matrix_convolve(a, b));
    const MassMatrix rhs = total_mass_matrix(a) * total_mass_matrix(b);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("matrix convolution is associative and distributive") {
  std::mt19937_64 gen(7);
  for (int t = 0; t < 20; ++t) {
    const KernelMatrix a = random_kernel(gen, 3, 1.0);
    const KernelMatrix b = random_kernel(gen, 3, 1.0);
    const KernelMatrix c = random_kernel(gen, 3, 1.0);
    CHECK(max_entry_total_variation(matrix_convolve(matrix_convolve(a, b), c),
                                    matrix_convolve(a, matrix_convolve(b, c))) <= 1e-12);
    CHECK(max_entry_total_variation(matrix_convolve(a, b + c),
                                    matrix_convolve(a, b) + matrix_convolve(a, c)) <= 1e-12);
  }
}

TEST_CASE("identity kernel is neutral") {
  std::mt19937_64 gen(9);
  const KernelMatrix a = random_kernel(gen, 3, 0.25);
  const KernelMatrix id = KernelMatrix::identity(3, 0.25);
  CHECK(max_entry_total_variation(matrix_convolve(id, a), a) == 0.0);
  CHECK(max_entry_total_variation(matrix_convolve(a, id), a) == 0.0);
}

TEST_CASE("signed arithmetic and moments") {
  const LatticeMeasure a(1.0, 0, {0.5, 0.5});
  const LatticeMeasure b(1.0, 1, {0.5});
  const LatticeMeasure d = a - b;
  CHECK(d.min_index() == 0);
  CHECK(d.max_index() == 0);
  CHECK(d.total_variation() == doctest::Approx(0.5));
  CHECK((a - a).is_zero());
  CHECK((2.0 * a).total_mass() == doctest::Approx(2.0));
  const LatticeMeasure e(0.5, -1, {0.25, 0.75});
  CHECK(e.first_moment() == doctest::Approx(0.5 * (-0.25)));
}

TEST_CASE("json round trip") {
  const LatticeMeasure a(0.5, -3, {0.1, 0.0, 0.9});
  const LatticeMeasure b = measure_from_json(to_json(a));
  CHECK(max_diff(a, b) == 0.0);
  CHECK(b.span() == 0.5);
}
