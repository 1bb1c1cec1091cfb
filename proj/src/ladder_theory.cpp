#include "mrwlab/ladder_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "mrwlab/error.hpp"

namespace mrwlab {

namespace {

using Index = Eigen::Index;

constexpr double kAliveCutoff = 1e-16;

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

struct EpochLaw {
  std::vector<double> absorbed;  // by step, from 1
  double censored = 0.0;
  double alive = 0.0;
};

// Strict ascending first passage from level 0 with initial state law
// `initial`; levels below -depth are censored.
EpochLaw epoch_recursion(const std::vector<std::vector<Move>>& moves,
                         const std::vector<double>& initial, std::size_t m_max,
                         std::int64_t depth) {
  const std::size_t m = moves.size();
  const std::size_t levels = static_cast<std::size_t>(depth) + 1;
  std::vector<double> cur(levels * m, 0.0);
  std::vector<double> nxt(levels * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) cur[static_cast<std::size_t>(depth) * m + i] = initial[i];

  EpochLaw law;
  double alive = 0.0;
  for (double w : initial) alive += w;
  for (std::size_t step = 1; step <= m_max && alive > kAliveCutoff; ++step) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    double absorbed = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      const std::int64_t level = static_cast<std::int64_t>(l) - depth;
      for (std::size_t i = 0; i < m; ++i) {
        const double mass = cur[l * m + i];
        if (mass == 0.0) continue;
        for (const Move& mv : moves[i]) {
          const std::int64_t to = level + mv.jump;
          const double w = mass * mv.prob;
          if (to > 0) {
            absorbed += w;
          } else if (to < -depth) {
            law.censored += w;
          } else {
            nxt[static_cast<std::size_t>(to + depth) * m + mv.next] += w;
          }
        }
      }
    }
    law.absorbed.push_back(absorbed);
    std::swap(cur, nxt);
    alive = 0.0;
    for (double w : cur) alive += w;
  }
  law.alive = alive;
  return law;
}

void check_depth(std::int64_t depth, std::size_t m_max) {
  if (depth < 0) throw ConfigError("ladder epoch recursion: depth must be >= 0");
  if (m_max < 1) throw ConfigError("ladder epoch recursion: m_max must be >= 1");
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

IdentityCheck make_check(std::string id, std::string description, std::string relation,
                         double lhs, double rhs, double tolerance) {
  IdentityCheck c{std::move(id), std::move(description), std::move(relation),
                  lhs, rhs, tolerance, false};
  if (c.relation == "le") {
    c.pass = lhs <= rhs + tolerance;
  } else {
    c.pass = std::abs(lhs - rhs) <= tolerance;
  }
  if (!std::isfinite(lhs) || !std::isfinite(rhs)) c.pass = false;
  return c;
}

// Worst state of a per-state comparison, measured by excess over tolerance.
IdentityCheck worst_state(std::string id, std::string description,
                          const std::vector<double>& lhs, const std::vector<double>& rhs,
                          const std::vector<double>& tol) {
  std::size_t worst = 0;
  double excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double e = std::abs(lhs[i] - rhs[i]) - tol[i];
    if (e > excess) {
      excess = e;
      worst = i;
    }
  }
  return make_check(std::move(id), std::move(description), "eq", lhs[worst], rhs[worst],
                    tol[worst]);
}

}  // namespace

LadderStationary ladder_stationary_exact(const MRWSpec& spec,
                                         const StationaryDistribution& pi,
                                         const EscapeProbabilities& escape) {
  const std::size_t m = spec.size();
  if (escape.lower.size() != m || static_cast<std::size_t>(pi.pi.size()) != m) {
    throw std::invalid_argument("ladder_stationary_exact: dimension mismatch");
  }
  LadderStationary out;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = pi.pi(static_cast<Index>(i));
    out.weighted_escape_lower.push_back(p * escape.lower[i]);
    out.weighted_escape_upper.push_back(p * escape.upper[i]);
    out.c_lower += p * escape.lower[i];
    out.c_upper += p * escape.upper[i];
    out.c += p * escape.midpoint(i);
  }
  if (!(out.c_lower > 0.0)) {
    std::ostringstream os;
    os << "escape constant c is not bounded away from 0 (bracket [" << out.c_lower
       << ", " << out.c_upper << "]); the dual walk may not diverge to +infinity";
    throw NonConvergenceError(os.str());
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double p = pi.pi(static_cast<Index>(i));
    const double v = p * escape.midpoint(i) / out.c;
    out.pi_ladder.push_back(v);
    out.pi_ladder_lower.push_back(out.weighted_escape_lower[i] / out.c_upper);
    out.pi_ladder_upper.push_back(std::min(1.0, out.weighted_escape_upper[i] / out.c_lower));
    out.support.push_back(v > kSupportThreshold);
    out.density.push_back(p > 0.0 ? v / p : 0.0);
  }
  return out;
}

NullVectorResult ladder_stationary_nullvector(const MassMatrix& ascending_mass,
                                              const MassMatrix& star_desc_mass,
                                              const StationaryDistribution& pi) {
  const Index m = pi.pi.size();
  if (ascending_mass.rows() != m || star_desc_mass.rows() != m) {
    throw std::invalid_argument("ladder_stationary_nullvector: dimension mismatch");
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  Eigen::RowVectorXd v = pi.pi.transpose() * (eye - star_desc_mass);

  NullVectorResult res;
  res.most_negative_entry = std::min(0.0, v.minCoeff());
  if (res.most_negative_entry < -1e-9) {
    std::ostringstream os;
    os << "null vector has a negative entry " << res.most_negative_entry
       << "; truncation too coarse";
    throw NonConvergenceError(os.str());
  }
  v = v.cwiseMax(0.0);
  const double c = v.sum();
  if (!(c > 0.0)) throw NonConvergenceError("null vector vanishes");

  LadderStationary& out = res.ladder;
  out.c = out.c_lower = out.c_upper = c;
  for (Index i = 0; i < m; ++i) {
    const double x = v(i) / c;
    out.pi_ladder.push_back(x);
    out.pi_ladder_lower.push_back(x);
    out.pi_ladder_upper.push_back(x);
    out.support.push_back(x > kSupportThreshold);
    out.density.push_back(pi.pi(i) > 0.0 ? x / pi.pi(i) : 0.0);
    out.weighted_escape_lower.push_back(v(i));
    out.weighted_escape_upper.push_back(v(i));
  }
  const Eigen::RowVectorXd x = v / c;
  res.stationarity_residual = (x * (eye - ascending_mass)).cwiseAbs().maxCoeff();
  return res;
}

DirectLadderStationary ladder_stationary_direct(const MassMatrix& ascending_mass,
                                                const std::vector<bool>& support) {
  const Index m = ascending_mass.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd((eye - ascending_mass).transpose(),
                                        Eigen::ComputeFullV);
  Eigen::VectorXd x = svd.matrixV().col(m - 1);
  if (x.sum() < 0.0) x = -x;
  x = x.cwiseMax(0.0);
  x /= x.sum();

  DirectLadderStationary out;
  out.pi_ladder = to_std(x);
  for (Index i = 0; i < m; ++i) out.support.push_back(x(i) > kSupportThreshold);

  std::vector<Index> idx;
  for (Index i = 0; i < m; ++i) {
    if (support[static_cast<std::size_t>(i)]) idx.push_back(i);
  }
  const Index s = static_cast<Index>(idx.size());
  if (s == 0) return out;
  Eigen::MatrixXd sub(s, s);
  for (Index a = 0; a < s; ++a) {
    for (Index b = 0; b < s; ++b) sub(a, b) = (a == b ? 1.0 : 0.0) - ascending_mass(idx[a], idx[b]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> sub_svd(sub);
  const auto& sv = sub_svd.singularValues();
  const double cutoff = 1e-8 * std::max(1.0, sv(0));
  for (Index k = 0; k < sv.size(); ++k) {
    if (sv(k) < cutoff) ++out.nullity_on_support;
  }
  return out;
}

std::vector<double> ladder_epoch_law(const MRWSpec& spec, const std::vector<double>& initial,
                                     std::size_t m_max, std::int64_t depth) {
  check_depth(depth, m_max);
  if (initial.size() != spec.size()) {
    throw std::invalid_argument("ladder_epoch_law: initial law size mismatch");
  }
  return epoch_recursion(moves_of(spec), initial, m_max, depth).absorbed;
}

NuTable joint_law_nu(const MRWSpec& spec, const LadderStationary& ladder,
                     std::size_t m_max, std::int64_t depth) {
  check_depth(depth, m_max);
  const std::size_t m = spec.size();
  const auto moves = moves_of(spec);
  NuTable table;
  std::vector<EpochLaw> laws(m);
  parallel_for(m, [&](std::size_t i) {
    std::vector<double> init(m, 0.0);
    init[i] = 1.0;
    laws[i] = epoch_recursion(moves, init, m_max, depth);
  });
  for (const EpochLaw& law : laws) table.steps = std::max(table.steps, law.absorbed.size());
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> fp = laws[i].absorbed;
    fp.resize(table.steps, 0.0);
    std::vector<double> row(table.steps);
    for (std::size_t k = 0; k < table.steps; ++k) row[k] = ladder.pi_ladder[i] * fp[k];
    const double lost = laws[i].censored + laws[i].alive;
    table.state_defect.push_back(ladder.pi_ladder[i] * lost);
    table.defect += ladder.pi_ladder[i] * lost;
    table.first_passage.push_back(std::move(fp));
    table.nu.push_back(std::move(row));
  }
  return table;
}

ExpectedEpochReport expected_ladder_epoch(const LadderStationary& ladder, const NuTable& nu) {
  ExpectedEpochReport rep;
  const std::size_t m = nu.nu.size();
  for (std::size_t k = 0; k < nu.steps; ++k) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += nu.nu[i][k];
    rep.truncated_mean += static_cast<double>(k + 1) * col;
  }
  rep.tail_mass = nu.defect;
  rep.identity_value = 1.0 / ladder.c;
  rep.identity_lower = 1.0 / ladder.c_upper;
  rep.identity_upper = 1.0 / ladder.c_lower;
  for (std::size_t i = 0; i < m; ++i) {
    double e = 0.0;
    for (std::size_t k = 0; k < nu.steps; ++k) {
      e += static_cast<double>(k + 1) * nu.first_passage[i][k];
    }
    rep.per_state_lower.push_back(e);
    const double w = ladder.weighted_escape_lower[i];
    const double bound = ladder.support[i] && w > 0.0
                             ? 1.0 / w
                             : std::numeric_limits<double>::infinity();
    rep.per_state_bound.push_back(bound);
    rep.bound_holds.push_back(!ladder.support[i] || e <= bound * (1.0 + 1e-9) + 1e-9);
  }
  return rep;
}

ExactPipeline run_exact_pipeline(const MRWSpec& spec, const ExactOptions& options) {
  ExactPipeline out;
  out.pi = stationary_distribution(spec);
  out.drift = stationary_drift(spec, out.pi);
  if (!(out.drift.mu > 0.0) && !options.assume_dual_divergence) {
    std::ostringstream os;
    os << "stationary drift " << out.drift.mu
       << " is not positive; ladder truncation cannot converge";
    throw NonConvergenceError(os.str());
  }
  out.dual = build_dual(spec, out.pi);
  out.step = step_kernel(spec);
  out.ascending = strict_ascending_kernel(spec, options.truncation);
  if (options.perturbation != 0.0) {
    out.ascending.kernel(0, 0) +=
        LatticeMeasure::dirac(spec.lattice_span(), 1, options.perturbation);
  }
  out.descending = weak_descending_kernel(*out.dual, options.truncation);
  out.escape = escape_from_kernel(out.descending);
  out.star = star_kernel(out.descending.kernel, out.pi);
  out.factorization = verify_factorization(out.step, out.star, out.ascending.kernel);
  out.substochastic = check_substochastic(out.descending, out.pi);
  out.exact = ladder_stationary_exact(spec, out.pi, out.escape);

  const MassMatrix asc_mass = total_mass_matrix(out.ascending.kernel);
  out.nullvector = ladder_stationary_nullvector(asc_mass, total_mass_matrix(out.star), out.pi);
  out.direct = ladder_stationary_direct(asc_mass, out.exact.support);
  out.nu = joint_law_nu(spec, out.exact, options.m_max, out.ascending.truncation_depth);
  out.marginal_law =
      ladder_epoch_law(spec, out.exact.pi_ladder, options.m_max, out.ascending.truncation_depth);
  out.expected = expected_ladder_epoch(out.exact, out.nu);
  return out;
}

VerificationReport cross_validate(const MRWSpec& spec, const ExactPipeline& exact,
                                  const MonteCarloOptions& mc) {
  const std::size_t m = spec.size();
  VerificationReport rep;
  auto& checks = rep.checks;
  const LadderStationary& ls = exact.exact;

  // Monte Carlo estimators, each with its own stream.
  rep.sigma0 = estimate_sigma0_probability(spec, exact.pi, mc.n_back,
                                           stream_seed(mc.seed, 1), mc.sigma0_reps);
  rep.occupation = estimate_ladder_occupation(spec, mc.initial_state, mc.n_ladder, mc.burn_in,
                                              stream_seed(mc.seed, 2), mc.occupation_reps,
                                              mc.max_steps, true);
  for (std::size_t i = 0; i < m; ++i) {
    rep.first_hit.push_back(first_hit_ladder_support(spec, ls.support, i, mc.first_hit_horizon,
                                                     stream_seed(mc.seed, 3 + i),
                                                     mc.first_hit_reps));
  }

  {
    std::vector<double> lhs, rhs, tol;
    for (std::size_t i = 0; i < m; ++i) {
      lhs.push_back(rep.sigma0[i].value);
      rhs.push_back(0.5 * (ls.weighted_escape_lower[i] + ls.weighted_escape_upper[i]));
      tol.push_back(3.0 * rep.sigma0[i].standard_error + ls.weighted_escape_upper[i] -
                    ls.weighted_escape_lower[i]);
    }
    checks.push_back(worst_state("sigma0_density",
                                 "MC P(M_0=i, sigma_0=0) vs pi_i P_i(dual never weakly descends)",
                                 lhs, rhs, tol));
  }
  {
    std::vector<double> lhs, rhs, tol;
    for (std::size_t i = 0; i < m; ++i) {
      lhs.push_back(rep.occupation.per_state[i].value);
      rhs.push_back(ls.pi_ladder[i]);
      tol.push_back(3.0 * rep.occupation.per_state[i].standard_error + ls.pi_ladder_upper[i] -
                    ls.pi_ladder_lower[i]);
    }
    checks.push_back(worst_state("ladder_occupation",
                                 "MC ladder-state occupation vs exact pi^>", lhs, rhs, tol));
  }
  {
    std::vector<double> tol(m, 1e-8);
    checks.push_back(worst_state("escape_representation",
                                 "pi^> from escape probabilities vs null vector of pi(I - ||*G||)",
                                 ls.pi_ladder, exact.nullvector.ladder.pi_ladder, tol));
    checks.push_back(worst_state("direct_stationary",
                                 "pi^> from escape probabilities vs SVD null vector of I - ||G^>||",
                                 ls.pi_ladder, exact.direct.pi_ladder, tol));
  }
  {
    double mismatches = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (ls.support[i] != exact.direct.support[i]) mismatches += 1.0;
      if (ls.support[i] != exact.nullvector.ladder.support[i]) mismatches += 1.0;
    }
    checks.push_back(make_check("ladder_support",
                                "states with positive escape probability vs support of the "
                                "ladder chain's stationary law (mismatch count)",
                                "eq", mismatches, 0.0, 0.0));
  }
  checks.push_back(make_check("ladder_stationarity", "||pi^>(I - ||G^>||)||_inf", "le",
                              exact.nullvector.stationarity_residual, 0.0, 1e-9));
  checks.push_back(make_check("ladder_uniqueness",
                              "nullity of I - ||G^>|| restricted to the ladder support", "eq",
                              static_cast<double>(exact.direct.nullity_on_support), 1.0, 0.0));
  {
    double hit_min = 1.0, se = 0.0;
    for (const MCEstimate& e : rep.first_hit) {
      if (e.value < hit_min) {
        hit_min = e.value;
        se = e.standard_error;
      }
    }
    checks.push_back(make_check("first_hit_support",
                                "fraction of runs whose ladder chain enters S^> (worst start)",
                                "eq", hit_min, 1.0, 3.0 * se));
  }
  {
    double worst = 0.0, negative = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double sum = exact.nu.state_defect[i];
      for (double v : exact.nu.nu[i]) {
        sum += v;
        negative = std::min(negative, v);
      }
      worst = std::max(worst, std::abs(sum - ls.pi_ladder[i]));
    }
    checks.push_back(make_check("nu_joint_law",
                                "max_i |sum_m nu_im + defect_i - pi^>_i| (nu >= 0 required)",
                                "le", worst - negative, 0.0, 1e-10));
  }
  {
    double worst = 0.0;
    for (std::size_t k = 0; k < exact.nu.steps; ++k) {
      double col = 0.0;
      for (std::size_t i = 0; i < m; ++i) col += exact.nu.nu[i][k];
      const double ref = k < exact.marginal_law.size() ? exact.marginal_law[k] : 0.0;
      worst = std::max(worst, std::abs(col - ref));
    }
    for (std::size_t k = exact.nu.steps; k < exact.marginal_law.size(); ++k) {
      worst = std::max(worst, std::abs(exact.marginal_law[k]));
    }
    checks.push_back(make_check("nu_marginal",
                                "max_m |sum_i nu_im - P_pi^>(sigma^> = m)|", "le", worst, 0.0,
                                1e-10));
  }
  {
    const ExpectedEpochReport& e = exact.expected;
    const double tol = 1e-7 * std::max(1.0, e.identity_value) +
                       (e.identity_upper - e.identity_lower);
    checks.push_back(make_check("expected_ladder_epoch",
                                "truncated E_pi^> sigma^> vs 1/c", "eq", e.truncated_mean,
                                e.identity_value, tol));
    double lhs = 0.0, rhs = 0.0, excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (!ls.support[i]) continue;
      const double x = e.per_state_lower[i] - e.per_state_bound[i];
      if (x > excess) {
        excess = x;
        lhs = e.per_state_lower[i];
        rhs = e.per_state_bound[i];
      }
    }
    checks.push_back(make_check("per_state_epoch_bound",
                                "E_i sigma^> <= 1/(pi_i P_i(escape)) on S^> (worst state)", "le",
                                lhs, rhs, 1e-9 * std::max(1.0, rhs)));
  }
  checks.push_back(make_check("wiener_hopf_factorization",
                              "max_ij TV(delta_0 I - G - (delta_0 I - *G)*(delta_0 I - G^>))",
                              "le", exact.factorization.max_entry_total_variation, 0.0, 1e-9));
  checks.push_back(make_check("column_escape_identity",
                              "distance of sum_i pi_i ||*G_ij|| to pi_j (1 - escape_j)", "le",
                              exact.substochastic.column_residual, 0.0, 1e-9));
  checks.push_back(make_check("mass_factorization",
                              "max |I - P - (I - ||*G||)(I - ||G^>||)|", "le",
                              exact.factorization.mass_residual, 0.0, 1e-9));
  {
    const auto& rows = exact.substochastic.row_sums;
    const double max_row = *std::max_element(rows.begin(), rows.end());
    const double min_row = *std::min_element(rows.begin(), rows.end());
    checks.push_back(make_check("substochastic_rows", "max_i sum_j ||#G_ij||", "le", max_row,
                                1.0, 1e-10));
    checks.push_back(make_check("strictly_substochastic", "min_i sum_j ||#G_ij||", "le",
                                min_row, 1.0 - 1e-10, 0.0));
  }

  rep.all_pass = std::all_of(checks.begin(), checks.end(),
                             [](const IdentityCheck& c) { return c.pass; });
  return rep;
}

nlohmann::json to_json(const IdentityCheck& check) {
  return {{"identity_id", check.id},   {"description", check.description},
          {"relation", check.relation}, {"lhs", check.lhs},
          {"rhs", check.rhs},           {"tolerance", check.tolerance},
          {"pass", check.pass}};
}

}  // namespace mrwlab
