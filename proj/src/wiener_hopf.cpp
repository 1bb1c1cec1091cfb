#include "mrwlab/wiener_hopf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "mrwlab/error.hpp"

namespace mrwlab {

namespace {

using Index = Eigen::Index;

struct Move {
  std::size_t next;
  std::int64_t jump;
  double prob;
};

std::vector<std::vector<Move>> moves_of(const MRWSpec& spec) {
  std::vector<std::vector<Move>> rows(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      const double p = spec.prob(i, j);
      if (p == 0.0) continue;
      const LatticeMeasure& f = spec.increment(i, j);
      for (std::int64_t k = f.min_index(); k <= f.max_index(); ++k) {
        const double w = f.weight_at(k);
        if (w > 0.0) rows[i].push_back({j, k, p * w});
      }
    }
  }
  return rows;
}

// Perron root and vector of a nonnegative irreducible matrix.
std::pair<double, Eigen::VectorXd> perron(const Eigen::MatrixXd& a) {
  if (a.rows() == 1) return {a(0, 0), Eigen::VectorXd::Ones(1)};
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, true);
  const auto& values = es.eigenvalues();
  Index best = 0;
  for (Index k = 1; k < values.size(); ++k) {
    if (values(k).real() > values(best).real()) best = k;
  }
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  if (v.sum() < 0.0) v = -v;
  return {values(best).real(), v};
}

Eigen::MatrixXd tilted_matrix(const MRWSpec& spec, double theta) {
  const Index m = static_cast<Index>(spec.size());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double p = spec.prob(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      if (p == 0.0) continue;
      const LatticeMeasure& f =
          spec.increment(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      double mgf = 0.0;
      for (std::int64_t k = f.min_index(); k <= f.max_index(); ++k) {
        const double w = f.weight_at(k);
        if (w > 0.0) mgf += w * std::exp(-theta * static_cast<double>(k));
      }
      phi(i, j) = p * mgf;
    }
  }
  return phi;
}

std::int64_t default_depth(const MRWSpec& spec, const TruncationOptions& options) {
  if (options.initial_depth > 0) return options.initial_depth;
  return std::max<std::int64_t>(4 * spec.max_abs_jump(), 4);
}

void check_options(const TruncationOptions& options) {
  if (!(options.tol > 0.0) || options.max_depth < 1) {
    throw ConfigError("truncation options: tol must be positive and max_depth >= 1");
  }
}

}  // namespace

const char* to_string(LadderDirection d) noexcept {
  return d == LadderDirection::kStrictAscending ? "strict_ascending" : "weak_descending";
}

std::vector<double> LadderKernelResult::row_mass() const {
  std::vector<double> out(kernel.dim(), 0.0);
  for (std::size_t i = 0; i < kernel.dim(); ++i) {
    for (std::size_t j = 0; j < kernel.dim(); ++j) out[i] += kernel(i, j).total_mass();
  }
  return out;
}

double DescentBound::at(std::int64_t levels) const {
  if (levels <= 0) return 1.0;
  if (std::isinf(theta)) return 0.0;
  return std::min(1.0, std::exp(log_kappa - theta * static_cast<double>(levels)));
}

DescentBound descent_bound(const MRWSpec& spec) {
  const std::int64_t max_jump = spec.max_abs_jump();
  if (max_jump == 0) return {};
  if (spec.max_down_jump() == 0) {
    return {std::numeric_limits<double>::infinity(), 0.0};
  }
  const auto pi = stationary_distribution(spec);
  if (!(stationary_drift(spec, pi).mu > 0.0)) return {};

  const double theta_cap = 20.0 / static_cast<double>(max_jump);
  double lo = 0.0;
  double hi = theta_cap;
  if (perron(tilted_matrix(spec, hi)).first <= 1.0) {
    lo = hi;
  } else {
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (perron(tilted_matrix(spec, mid)).first <= 1.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  if (lo == 0.0) return {};
  const Eigen::VectorXd h = perron(tilted_matrix(spec, lo)).second;
  if (!(h.minCoeff() > 0.0)) return {};
  return {lo, std::log(h.maxCoeff() / h.minCoeff())};
}

LadderKernelResult solve_ladder_system(const MRWSpec& spec, LadderDirection direction,
                                       std::int64_t depth) {
  if (depth < 1) throw ConfigError("truncation depth must be >= 1");
  const bool ascending = direction == LadderDirection::kStrictAscending;
  const std::size_t m = spec.size();
  const std::int64_t lo = ascending ? -depth : 1;
  const std::int64_t hi = ascending ? 0 : depth;
  const std::int64_t levels = hi - lo + 1;
  const auto n = static_cast<Index>(m) * levels;
  // Absorbing heights: [1, up] ascending, [-down, 0] descending.
  const std::int64_t h_lo = ascending ? 1 : -spec.max_down_jump();
  const std::int64_t h_hi = ascending ? std::max<std::int64_t>(spec.max_up_jump(), 1) : 0;
  const std::int64_t heights = h_hi - h_lo + 1;
  const auto absorbing_cols = static_cast<Index>(m) * heights;
  const Index defect_col = absorbing_cols;

  enum class Kind { kTransient, kAbsorbed, kCensored };
  auto classify = [&](std::int64_t level) {
    if (ascending) {
      if (level > 0) return Kind::kAbsorbed;
      if (level < lo) return Kind::kCensored;
    } else {
      if (level <= 0) return Kind::kAbsorbed;
      if (level > hi) return Kind::kCensored;
    }
    return Kind::kTransient;
  };
  auto transient_index = [&](std::size_t state, std::int64_t level) {
    return static_cast<Index>(level - lo) * static_cast<Index>(m) + static_cast<Index>(state);
  };
  auto absorbing_index = [&](std::size_t state, std::int64_t level) {
    return static_cast<Index>(state) * heights + static_cast<Index>(level - h_lo);
  };

  const auto moves = moves_of(spec);
  std::vector<Eigen::Triplet<double, int>> system;
  std::vector<Eigen::Triplet<double, int>> exits;
  for (std::int64_t level = lo; level <= hi; ++level) {
    for (std::size_t i = 0; i < m; ++i) {
      const Index u = transient_index(i, level);
      system.emplace_back(static_cast<int>(u), static_cast<int>(u), 1.0);
      for (const Move& mv : moves[i]) {
        const std::int64_t next = level + mv.jump;
        switch (classify(next)) {
          case Kind::kTransient:
            // Transposed system: row = destination, column = origin.
            system.emplace_back(static_cast<int>(transient_index(mv.next, next)),
                                static_cast<int>(u), -mv.prob);
            break;
          case Kind::kAbsorbed:
            exits.emplace_back(static_cast<int>(u),
                               static_cast<int>(absorbing_index(mv.next, next)), mv.prob);
            break;
          case Kind::kCensored:
            exits.emplace_back(static_cast<int>(u), static_cast<int>(defect_col), mv.prob);
            break;
        }
      }
    }
  }
  Eigen::SparseMatrix<double> transposed(n, n);
  transposed.setFromTriplets(system.begin(), system.end());
  Eigen::SparseMatrix<double> exit_matrix(n, absorbing_cols + 1);
  exit_matrix.setFromTriplets(exits.begin(), exits.end());

  // First step from level 0 of each starting state.
  Eigen::MatrixXd first = Eigen::MatrixXd::Zero(n, static_cast<Index>(m));
  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(static_cast<Index>(m), absorbing_cols + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (const Move& mv : moves[i]) {
      switch (classify(mv.jump)) {
        case Kind::kTransient:
          first(transient_index(mv.next, mv.jump), static_cast<Index>(i)) += mv.prob;
          break;
        case Kind::kAbsorbed:
          direct(static_cast<Index>(i), absorbing_index(mv.next, mv.jump)) += mv.prob;
          break;
        case Kind::kCensored:
          direct(static_cast<Index>(i), defect_col) += mv.prob;
          break;
      }
    }
  }

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(transposed);
  lu.factorize(transposed);
  if (lu.info() != Eigen::Success) {
    throw NonConvergenceError(
        "first-passage system is singular: the walk can stay inside the level band "
        "forever");
  }
  const Eigen::MatrixXd green = lu.solve(first);
  const Eigen::MatrixXd outcome = direct + green.transpose() * exit_matrix;

  LadderKernelResult result;
  result.direction = direction;
  result.truncation_depth = depth;
  result.kernel = KernelMatrix(m, spec.lattice_span());
  result.row_defect.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> w(static_cast<std::size_t>(heights));
      for (std::int64_t h = h_lo; h <= h_hi; ++h) {
        w[static_cast<std::size_t>(h - h_lo)] =
            std::max(0.0, outcome(static_cast<Index>(i), absorbing_index(j, h)));
      }
      LatticeMeasure entry(spec.lattice_span(), h_lo, std::move(w));
      entry.trim();
      result.kernel(i, j) = std::move(entry);
    }
    result.row_defect[i] = std::max(0.0, outcome(static_cast<Index>(i), defect_col));
  }
  if (!ascending) result.return_bound = descent_bound(spec).at(depth + 1);
  return result;
}

LadderKernelResult strict_ascending_kernel(const MRWSpec& spec,
                                           const TruncationOptions& options) {
  check_options(options);
  std::int64_t depth = std::min(default_depth(spec, options), options.max_depth);
  for (;;) {
    LadderKernelResult r =
        solve_ladder_system(spec, LadderDirection::kStrictAscending, depth);
    const double worst = *std::max_element(r.row_defect.begin(), r.row_defect.end());
    if (worst < options.tol) {
      r.converged = true;
      return r;
    }
    if (depth >= options.max_depth) {
      std::ostringstream os;
      os << "strict ascending kernel: row defect " << worst << " >= tol " << options.tol
         << " at maximum depth " << depth
         << " (ascending ladder epochs may fail to be almost surely finite)";
      throw NonConvergenceError(os.str());
    }
    depth = std::min(2 * depth, options.max_depth);
  }
}

LadderKernelResult weak_descending_kernel(const MRWSpec& dual,
                                          const TruncationOptions& options) {
  check_options(options);
  std::int64_t depth = std::min(default_depth(dual, options), options.max_depth);
  for (;;) {
    LadderKernelResult r = solve_ladder_system(dual, LadderDirection::kWeakDescending, depth);
    const double worst = *std::max_element(r.row_defect.begin(), r.row_defect.end());
    if (worst * r.return_bound < options.tol) {
      r.converged = true;
      return r;
    }
    if (depth >= options.max_depth) {
      std::ostringstream os;
      os << "weak descending kernel: escape bracket width " << worst * r.return_bound
         << " >= tol " << options.tol << " at maximum depth " << depth
         << " (positive divergence of the dual walk not certified)";
      throw NonConvergenceError(os.str());
    }
    depth = std::min(2 * depth, options.max_depth);
  }
}

double EscapeProbabilities::max_width() const {
  double w = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) w = std::max(w, upper[i] - lower[i]);
  return w;
}

EscapeProbabilities escape_from_kernel(const LadderKernelResult& descending) {
  EscapeProbabilities esc;
  for (double defect : descending.row_defect) {
    const double upper = std::min(1.0, defect);
    esc.upper.push_back(upper);
    esc.lower.push_back(std::max(0.0, upper * (1.0 - descending.return_bound)));
  }
  return esc;
}

EscapeProbabilities escape_probabilities(const MRWSpec& dual,
                                         const TruncationOptions& options) {
  return escape_from_kernel(weak_descending_kernel(dual, options));
}

KernelMatrix star_kernel(const KernelMatrix& descending, const StationaryDistribution& pi) {
  const std::size_t m = descending.dim();
  if (static_cast<std::size_t>(pi.pi.size()) != m) {
    throw std::invalid_argument("star_kernel: dimension mismatch");
  }
  KernelMatrix out(m, descending.span());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out(i, j) = (pi.pi(static_cast<Index>(j)) / pi.pi(static_cast<Index>(i))) *
                  descending(j, i);
    }
  }
  return out;
}

FactorizationReport verify_factorization(const KernelMatrix& step,
                                         const KernelMatrix& star_descending,
                                         const KernelMatrix& ascending) {
  const std::size_t m = step.dim();
  const KernelMatrix id = KernelMatrix::identity(m, step.span());
  const KernelMatrix lhs = id - step;
  const KernelMatrix rhs = matrix_convolve(id - star_descending, id - ascending);
  const KernelMatrix diff = lhs - rhs;

  FactorizationReport rep;
  rep.entry_residuals.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double tv = diff(i, j).total_variation();
      rep.entry_residuals[i][j] = tv;
      rep.max_entry_total_variation = std::max(rep.max_entry_total_variation, tv);
    }
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(static_cast<Index>(m),
                                                        static_cast<Index>(m));
  const Eigen::MatrixXd mass_lhs = eye - total_mass_matrix(step);
  const Eigen::MatrixXd mass_rhs =
      (eye - total_mass_matrix(star_descending)) * (eye - total_mass_matrix(ascending));
  rep.mass_residual = (mass_lhs - mass_rhs).cwiseAbs().maxCoeff();
  return rep;
}

SubstochasticReport check_substochastic(const LadderKernelResult& descending,
                                        const StationaryDistribution& pi, double tol) {
  const std::size_t m = descending.kernel.dim();
  SubstochasticReport rep;
  rep.row_sums = descending.row_mass();
  rep.rows_bounded = std::all_of(rep.row_sums.begin(), rep.row_sums.end(),
                                 [&](double s) { return s <= 1.0 + tol; });
  rep.strict_row = std::any_of(rep.row_sums.begin(), rep.row_sums.end(),
                               [&](double s) { return s < 1.0 - tol; });

  const MassMatrix star_mass = total_mass_matrix(star_kernel(descending.kernel, pi));
  const EscapeProbabilities esc = escape_from_kernel(descending);
  for (std::size_t j = 0; j < m; ++j) {
    const double pij = pi.pi(static_cast<Index>(j));
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      col += pi.pi(static_cast<Index>(i)) * star_mass(static_cast<Index>(i), static_cast<Index>(j));
    }
    const double lo = pij * (1.0 - esc.upper[j]);
    const double hi = pij * (1.0 - esc.lower[j]);
    rep.column_mass.push_back(col);
    rep.column_lower.push_back(lo);
    rep.column_upper.push_back(hi);
    const double dist = col < lo ? lo - col : (col > hi ? col - hi : 0.0);
    rep.column_residual = std::max(rep.column_residual, dist);
    if (col < pij - tol * pij) rep.strict_column = true;
  }
  rep.pass = rep.rows_bounded && rep.strict_row && rep.strict_column &&
             rep.column_residual <= 1e-9;
  return rep;
}

}  // namespace mrwlab
