#include "mrwlab/ladder_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "mrwlab/error.hpp"

namespace mrwlab {

namespace {

using Index = Eigen::Index;

// Path in lattice units; used where exact index arithmetic matters.
struct IndexPath {
  std::vector<std::size_t> states;
  std::vector<std::int64_t> sums;
};

IndexPath simulate_indices(const StepSampler& sampler, std::size_t initial,
                           std::size_t n_steps, Rng& rng) {
  IndexPath path;
  path.states.reserve(n_steps + 1);
  path.sums.reserve(n_steps + 1);
  path.states.push_back(initial);
  path.sums.push_back(0);
  std::size_t state = initial;
  std::int64_t level = 0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto step = sampler.sample(state, rng);
    state = step.next;
    level += step.jump;
    path.states.push_back(state);
    path.sums.push_back(level);
  }
  return path;
}

std::vector<std::size_t> ascending_epochs(const std::vector<std::int64_t>& sums) {
  std::vector<std::size_t> epochs{0};
  std::int64_t record = sums.front();
  for (std::size_t k = 1; k < sums.size(); ++k) {
    if (sums[k] > record) {
      epochs.push_back(k);
      record = sums[k];
    }
  }
  return epochs;
}

std::size_t check_state(const MRWSpec& spec, std::size_t state) {
  if (state >= spec.size()) {
    throw ConfigError("unknown initial state index " + std::to_string(state));
  }
  return state;
}

}  // namespace

MCEstimate summarize_replicates(const std::vector<double>& values) {
  MCEstimate est;
  est.replicates = values.size();
  if (values.empty()) return est;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  est.value = mean;
  if (values.size() > 1) {
    const double var = ss / static_cast<double>(values.size() - 1);
    est.standard_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return est;
}

StepSampler::StepSampler(const MRWSpec& spec) : rows_(spec.size()) {
  for (std::size_t i = 0; i < spec.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
      const double p = spec.prob(i, j);
      if (p == 0.0) continue;
      const LatticeMeasure& f = spec.increment(i, j);
      for (std::int64_t k = f.min_index(); k <= f.max_index(); ++k) {
        const double w = f.weight_at(k);
        if (w <= 0.0) continue;
        acc += p * w;
        rows_[i].push_back({acc, j, k});
      }
    }
  }
}

StepSampler::Step StepSampler::sample(std::size_t state, Rng& rng) const {
  const auto& row = rows_[state];
  const double u = rng.uniform() * row.back().cumulative;
  auto it = std::upper_bound(row.begin(), row.end(), u,
                             [](double x, const Outcome& o) { return x < o.cumulative; });
  if (it == row.end()) it = row.end() - 1;
  return {it->next, it->jump};
}

PathSample simulate_path(const MRWSpec& spec, std::size_t initial_state,
                         std::size_t n_steps, std::uint64_t seed) {
  check_state(spec, initial_state);
  if (n_steps < 1) throw ConfigError("simulate_path: n_steps must be >= 1");
  const StepSampler sampler(spec);
  Rng rng(seed);
  const IndexPath ip = simulate_indices(sampler, initial_state, n_steps, rng);
  PathSample path;
  path.initial_state = initial_state;
  path.seed = seed;
  path.states = ip.states;
  path.partial_sums.reserve(ip.sums.size());
  path.increments.reserve(n_steps);
  const double d = spec.lattice_span();
  for (std::size_t k = 0; k < ip.sums.size(); ++k) {
    path.partial_sums.push_back(static_cast<double>(ip.sums[k]) * d);
    if (k > 0) path.increments.push_back(static_cast<double>(ip.sums[k] - ip.sums[k - 1]) * d);
  }
  return path;
}

LadderExtraction extract_strict_ascending(const PathSample& path) {
  LadderExtraction out;
  const auto& s = path.partial_sums;
  if (s.empty()) return out;
  out.epochs.push_back(0);
  out.states.push_back(path.states.front());
  out.heights.push_back(s.front());
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k] > out.heights.back()) {
      out.epochs.push_back(k);
      out.states.push_back(path.states[k]);
      out.heights.push_back(s[k]);
    }
  }
  out.complete = out.epochs.back() + 1 == s.size();
  if (!ladder_maximality_holds(path, out)) {
    throw std::logic_error("ladder maximality violated");
  }
  return out;
}

LadderExtraction extract_weak_descending(const PathSample& path) {
  LadderExtraction out;
  const auto& s = path.partial_sums;
  if (s.empty()) return out;
  out.epochs.push_back(0);
  out.states.push_back(path.states.front());
  out.heights.push_back(s.front());
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (s[k] <= out.heights.back()) {
      out.epochs.push_back(k);
      out.states.push_back(path.states[k]);
      out.heights.push_back(s[k]);
    }
  }
  out.complete = out.epochs.back() + 1 == s.size();
  return out;
}

bool ladder_maximality_holds(const PathSample& path, const LadderExtraction& ladder) {
  const auto& s = path.partial_sums;
  if (ladder.epochs.empty() || ladder.epochs.front() != 0) return s.empty();
  std::size_t next = 1;
  double height = s.front();
  for (std::size_t k = 1; k < s.size(); ++k) {
    if (next < ladder.epochs.size() && ladder.epochs[next] == k) {
      if (!(s[k] > height) || ladder.heights[next] != s[k]) return false;
      height = s[k];
      ++next;
    } else if (s[k] > height) {
      return false;
    }
  }
  return next == ladder.epochs.size();
}

void require_divergence(const MRWSpec& spec, bool assume_dual_divergence) {
  if (assume_dual_divergence) return;
  const auto pi = stationary_distribution(spec);
  const double mu = stationary_drift(spec, pi).mu;
  if (!(mu > 0.0)) {
    throw ConfigError(
        "stationary drift is not positive; positive divergence of the dual walk "
        "is not established (set assume_dual_divergence to assert it)");
  }
}

OccupationEstimate estimate_ladder_occupation(const MRWSpec& spec,
                                              std::size_t initial_state,
                                              std::size_t n_ladder,
                                              std::size_t burn_in, std::uint64_t seed,
                                              std::size_t reps, std::size_t max_steps,
                                              bool assume_dual_divergence) {
  check_state(spec, initial_state);
  require_divergence(spec, assume_dual_divergence);
  if (n_ladder < 1 || reps < 1) {
    throw ConfigError("estimate_ladder_occupation: n_ladder and reps must be >= 1");
  }
  const std::size_t m = spec.size();
  const StepSampler sampler(spec);
  std::vector<std::vector<std::size_t>> counts(reps, std::vector<std::size_t>(m, 0));
  std::vector<std::size_t> collected(reps, 0);

  parallel_for(reps, [&](std::size_t r) {
    Rng rng(stream_seed(seed, r));
    std::size_t state = initial_state;
    std::int64_t level = 0;
    std::int64_t record = 0;
    std::size_t index = 0;
    for (std::size_t step = 0; step < max_steps && collected[r] < n_ladder; ++step) {
      const auto s = sampler.sample(state, rng);
      state = s.next;
      level += s.jump;
      if (level > record) {
        record = level;
        if (++index > burn_in) {
          ++counts[r][state];
          ++collected[r];
        }
      }
    }
  });

  OccupationEstimate out;
  std::vector<std::vector<double>> freq(m);
  for (std::size_t r = 0; r < reps; ++r) {
    if (collected[r] < n_ladder) {
      out.complete = false;
      ++out.incomplete_replicates;
    }
    if (collected[r] == 0) continue;
    for (std::size_t i = 0; i < m; ++i) {
      freq[i].push_back(static_cast<double>(counts[r][i]) /
                        static_cast<double>(collected[r]));
    }
  }
  if (freq.front().empty()) {
    throw NonConvergenceError(
        "estimate_ladder_occupation: no ladder epochs observed within max_steps");
  }
  for (std::size_t i = 0; i < m; ++i) {
    MCEstimate est = summarize_replicates(freq[i]);
    est.seed = seed;
    est.params = {{"n_ladder", static_cast<double>(n_ladder)},
                  {"burn_in", static_cast<double>(burn_in)},
                  {"max_steps", static_cast<double>(max_steps)},
                  {"initial_state", static_cast<double>(initial_state)}};
    out.per_state.push_back(std::move(est));
  }
  return out;
}

std::vector<MCEstimate> estimate_sigma0_probability(const MRWSpec& spec,
                                                    const StationaryDistribution& pi,
                                                    std::size_t n_back,
                                                    std::uint64_t seed,
                                                    std::size_t reps) {
  if (n_back < 1 || reps < 1) {
    throw ConfigError("estimate_sigma0_probability: n_back and reps must be >= 1");
  }
  const std::size_t m = spec.size();
  const MRWSpec dual = build_dual(spec, pi);
  const StepSampler sampler(dual);
  std::vector<double> cumulative(m);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    acc += pi.pi(static_cast<Index>(i));
    cumulative[i] = acc;
  }
  std::vector<std::size_t> start(reps);
  std::vector<char> escaped(reps, 0);

  parallel_for(reps, [&](std::size_t r) {
    Rng rng(stream_seed(seed, r));
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t state = it == cumulative.end() ? m - 1
                                               : static_cast<std::size_t>(it - cumulative.begin());
    start[r] = state;
    std::int64_t level = 0;
    for (std::size_t n = 0; n < n_back; ++n) {
      const auto s = sampler.sample(state, rng);
      state = s.next;
      level += s.jump;
      if (level <= 0) return;
    }
    escaped[r] = 1;
  });

  std::vector<MCEstimate> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> ind(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      ind[r] = (start[r] == i && escaped[r]) ? 1.0 : 0.0;
    }
    MCEstimate est = summarize_replicates(ind);
    est.seed = seed;
    est.params = {{"n_back", static_cast<double>(n_back)}};
    out.push_back(std::move(est));
  }
  return out;
}

CouplingReport coupling_experiment(const MRWSpec& spec, std::size_t first_state,
                                   std::size_t second_state, std::size_t horizon,
                                   std::uint64_t seed) {
  check_state(spec, first_state);
  check_state(spec, second_state);
  const StepSampler sampler(spec);
  Rng rng_first(stream_seed(seed, 0));
  Rng rng_second(stream_seed(seed, 1));
  const IndexPath a = simulate_indices(sampler, first_state, horizon, rng_first);
  const IndexPath b = simulate_indices(sampler, second_state, horizon, rng_second);

  CouplingReport rep;
  std::size_t t = 0;
  while (t <= horizon && a.states[t] != b.states[t]) ++t;
  if (t > horizon) return rep;
  rep.coupled = true;
  rep.coupling_time = t;

  const std::int64_t y_first = *std::max_element(a.sums.begin(), a.sums.begin() + t + 1);
  const std::int64_t y_second = *std::max_element(b.sums.begin(), b.sums.begin() + t + 1);
  const std::int64_t y = std::max(y_first, y_second);
  const double d = spec.lattice_span();
  rep.y_first = static_cast<double>(y_first) * d;
  rep.y_second = static_cast<double>(y_second) * d;
  rep.y = static_cast<double>(y) * d;

  // Spliced walk: first chain up to T, second chain's increments afterwards.
  const std::int64_t shift = a.sums[t] - b.sums[t];
  std::vector<std::int64_t> spliced(horizon + 1);
  for (std::size_t n = 0; n <= horizon; ++n) {
    spliced[n] = n <= t ? a.sums[n] : b.sums[n] + shift;
  }
  const auto second_epochs = ascending_epochs(b.sums);
  const auto spliced_epochs = ascending_epochs(spliced);
  const std::int64_t second_threshold = y + std::max<std::int64_t>(0, -shift);
  const std::int64_t spliced_threshold = y + std::max<std::int64_t>(0, shift);
  for (std::size_t n = 0; n < second_epochs.size(); ++n) {
    if (b.sums[second_epochs[n]] > second_threshold) {
      rep.tau = n;
      break;
    }
  }
  for (std::size_t n = 0; n < spliced_epochs.size(); ++n) {
    if (spliced[spliced_epochs[n]] > spliced_threshold) {
      rep.rho = n;
      break;
    }
  }
  if (!rep.tau || !rep.rho) return rep;

  const std::size_t tau = *rep.tau;
  const std::size_t rho = *rep.rho;
  bool match = second_epochs[tau] == spliced_epochs[rho] && second_epochs[tau] > t;
  const std::size_t tail_second = second_epochs.size() - tau;
  const std::size_t tail_spliced = spliced_epochs.size() - rho;
  match = match && tail_second == tail_spliced;
  const std::size_t common = std::min(tail_second, tail_spliced);
  for (std::size_t n = 0; n < common && match; ++n) {
    match = second_epochs[tau + n] == spliced_epochs[rho + n];
  }
  rep.first_common_ladder_epoch = second_epochs[tau];
  rep.compared_epochs = common;
  rep.matched_tail = match;
  return rep;
}

std::vector<double> embedded_renewal(const PathSample& path, std::size_t state) {
  const LadderExtraction ladder = extract_strict_ascending(path);
  std::vector<double> out;
  std::optional<double> last;
  for (std::size_t n = 0; n < ladder.epochs.size(); ++n) {
    if (ladder.states[n] != state) continue;
    if (last) out.push_back(ladder.heights[n] - *last);
    last = ladder.heights[n];
  }
  return out;
}

MCEstimate first_hit_ladder_support(const MRWSpec& spec, const std::vector<bool>& support,
                                    std::size_t initial_state, std::size_t horizon,
                                    std::uint64_t seed, std::size_t reps) {
  check_state(spec, initial_state);
  if (support.size() != spec.size()) {
    throw ConfigError("first_hit_ladder_support: support size mismatch");
  }
  if (reps < 1) throw ConfigError("first_hit_ladder_support: reps must be >= 1");
  const StepSampler sampler(spec);
  std::vector<double> hit(reps, 0.0);
  parallel_for(reps, [&](std::size_t r) {
    Rng rng(stream_seed(seed, r));
    std::size_t state = initial_state;
    std::int64_t level = 0;
    std::int64_t record = 0;
    for (std::size_t n = 0; n < horizon; ++n) {
      const auto s = sampler.sample(state, rng);
      state = s.next;
      level += s.jump;
      if (level > record) {
        record = level;
        if (support[state]) {
          hit[r] = 1.0;
          return;
        }
      }
    }
  });
  MCEstimate est = summarize_replicates(hit);
  est.seed = seed;
  est.params = {{"horizon", static_cast<double>(horizon)},
                {"initial_state", static_cast<double>(initial_state)}};
  return est;
}

double FlowerWeights::prob(std::uint64_t petal) const {
  return (1.0 - ratio) * std::pow(ratio, static_cast<double>(petal - 1));
}

double FlowerWeights::inverse_prob(std::uint64_t petal) const {
  if (ratio == 0.5) return std::ldexp(1.0, static_cast<int>(std::min<std::uint64_t>(petal, 4096)));
  return 1.0 / prob(petal);
}

std::uint64_t FlowerWeights::sample(Rng& rng) const {
  if (ratio == 0.5) {
    // P(I >= k) = 2^-(k-1): one plus the number of leading zero bits.
    std::uint64_t petal = 1;
    for (;;) {
      const std::uint64_t word = rng.next_u64();
      if (word != 0) return petal + static_cast<std::uint64_t>(std::countl_zero(word));
      petal += 64;
    }
  }
  const double u = rng.uniform_pos();
  return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log(ratio)));
}

double FlowerWeights::tail_inverse_at_least(double threshold) const {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("flower weights: ratio must lie in (0, 1)");
  }
  std::uint64_t petal = 1;
  while (inverse_prob(petal) < threshold) {
    ++petal;
    if (petal > 4000) return 0.0;
  }
  return std::pow(ratio, static_cast<double>(petal - 1));
}

PathSample simulate_flower(const FlowerWeights& weights, std::size_t n_steps,
                           std::uint64_t seed, bool dual) {
  if (!(weights.ratio > 0.0 && weights.ratio < 1.0)) {
    throw ConfigError("flower weights: ratio must lie in (0, 1)");
  }
  PathSample path;
  path.seed = seed;
  path.initial_state = 0;
  path.states.reserve(n_steps + 1);
  path.partial_sums.reserve(n_steps + 1);
  path.increments.reserve(n_steps);
  path.states.push_back(0);
  path.partial_sums.push_back(0.0);
  Rng rng(seed);
  std::uint64_t state = 0;
  double level = 0.0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    double x = 0.0;
    if (state == 0) {
      const std::uint64_t petal = weights.sample(rng);
      const double inv = weights.inverse_prob(petal);
      x = dual ? 2.0 + inv : -inv;
      state = petal;
    } else {
      const double inv = weights.inverse_prob(state);
      x = dual ? -inv : 2.0 + inv;
      state = 0;
    }
    level += x;
    path.states.push_back(static_cast<std::size_t>(state));
    path.increments.push_back(x);
    path.partial_sums.push_back(level);
  }
  return path;
}

FlowerAudit audit_flower_path(const PathSample& path, const FlowerWeights& weights,
                              bool dual) {
  FlowerAudit audit;
  for (std::size_t n = 0; n < path.partial_sums.size(); ++n) {
    const double s = path.partial_sums[n];
    const double nn = static_cast<double>(n);
    double expected = nn;
    bool state_ok = true;
    if (n % 2 == 1) {
      const double inv = weights.inverse_prob(path.states[n]);
      expected = dual ? nn + 1.0 + inv : nn - 1.0 - inv;
      state_ok = path.states[n] != 0;
    } else {
      state_ok = path.states[n] == 0;
    }
    ++audit.steps_checked;
    if (!state_ok || std::abs(s - expected) > 1e-9 * (1.0 + std::abs(expected))) {
      ++audit.formula_failures;
    }
    if (dual && s < nn - 1.0) ++audit.lower_bound_failures;
  }
  return audit;
}

double flower_min_tail_probability(const FlowerWeights& weights, std::size_t horizon,
                                   double depth) {
  // Even steps sit at S_n = n >= 0 > -B; odd step n reaches n - 1 - 1/p_0I,
  // which is <= -B iff 1/p_0I >= n - 1 + B. Odd-step petals are i.i.d.
  double survive = 1.0;
  for (std::size_t n = 1; n <= horizon; n += 2) {
    survive *= 1.0 - weights.tail_inverse_at_least(static_cast<double>(n) - 1.0 + depth);
  }
  if (depth <= 0.0) {
    for (std::size_t n = 2; n <= horizon; n += 2) {
      if (static_cast<double>(n) <= -depth) survive = 0.0;
    }
  }
  return 1.0 - survive;
}

MCEstimate estimate_flower_min_tail(const FlowerWeights& weights, std::size_t horizon,
                                    double depth, std::uint64_t seed, std::size_t reps) {
  if (reps < 1 || horizon < 1) {
    throw ConfigError("estimate_flower_min_tail: horizon and reps must be >= 1");
  }
  std::vector<double> hit(reps, 0.0);
  parallel_for(reps, [&](std::size_t r) {
    const PathSample path = simulate_flower(weights, horizon, stream_seed(seed, r));
    for (std::size_t n = 1; n < path.partial_sums.size(); ++n) {
      if (path.partial_sums[n] <= -depth) {
        hit[r] = 1.0;
        return;
      }
    }
  });
  MCEstimate est = summarize_replicates(hit);
  est.seed = seed;
  est.params = {{"N", static_cast<double>(horizon)}, {"B", depth}};
  return est;
}

}  // namespace mrwlab
