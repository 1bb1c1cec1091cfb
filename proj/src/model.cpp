#include "mrwlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <utility>

#include "mrwlab/error.hpp"
#include "mrwlab/rng.hpp"

namespace mrwlab {

namespace {

using Index = Eigen::Index;

std::string describe_pair(const std::vector<std::string>& names, std::size_t i,
                          std::size_t j) {
  std::ostringstream os;
  os << "(" << i << ":" << names[i] << " -> " << j << ":" << names[j] << ")";
  return os.str();
}

// Every state reaches every other state, checked by breadth-first closure on
// the graph and on its reverse from state 0.
std::vector<std::size_t> unreachable_states(const Eigen::MatrixXd& p,
                                            bool reverse) {
  const std::size_t m = static_cast<std::size_t>(p.rows());
  std::vector<char> seen(m, 0);
  std::queue<std::size_t> todo;
  seen[0] = 1;
  todo.push(0);
  while (!todo.empty()) {
    const std::size_t u = todo.front();
    todo.pop();
    for (std::size_t v = 0; v < m; ++v) {
      const double w = reverse ? p(static_cast<Index>(v), static_cast<Index>(u))
                               : p(static_cast<Index>(u), static_cast<Index>(v));
      if (w > 0.0 && !seen[v]) {
        seen[v] = 1;
        todo.push(v);
      }
    }
  }
  std::vector<std::size_t> missing;
  for (std::size_t v = 0; v < m; ++v) {
    if (!seen[v]) missing.push_back(v);
  }
  return missing;
}

double param_or(const nlohmann::json& params, const char* key, double fallback) {
  if (params.is_object() && params.contains(key)) {
    if (!params.at(key).is_number()) {
      throw ConfigError(std::string("parameter '") + key + "' must be a number");
    }
    return params.at(key).get<double>();
  }
  return fallback;
}

MRWSpec make_two_cycle() {
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  std::vector<LatticeMeasure> f(4, LatticeMeasure::zero(1.0));
  f[1] = LatticeMeasure::dirac(1.0, 2);
  f[2] = LatticeMeasure::dirac(1.0, -1);
  return MRWSpec::from_parts({"a", "b"}, p, std::move(f), 1.0);
}

MRWSpec make_simple_rw(double up) {
  if (!(up >= 0.0 && up <= 1.0)) {
    throw ConfigError("simple_rw: p must lie in [0, 1]");
  }
  Eigen::MatrixXd p(1, 1);
  p << 1.0;
  LatticeMeasure f(1.0, -1, {1.0 - up, 0.0, up});
  return MRWSpec::from_parts({"x"}, p, {f}, 1.0);
}

// Zero stationary drift; only transitions into s carry positive increments.
MRWSpec make_remark2() {
  Eigen::MatrixXd p(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  std::vector<LatticeMeasure> f(4, LatticeMeasure::zero(1.0));
  f[1] = LatticeMeasure::dirac(1.0, -2);                  // s -> a
  f[2] = LatticeMeasure(1.0, 1, {0.5, 0.0, 0.5});         // a -> s
  return MRWSpec::from_parts({"s", "a"}, p, std::move(f), 1.0);
}

// Hub 0 with petals 1..N, p_0i proportional to 2^-i. With span 2^-N every
// 1/p_0i = 2^i - 2^(i-N) is a lattice point.
MRWSpec make_flower_truncated(double n_param) {
  if (!(n_param >= 1.0 && n_param <= 30.0) || n_param != std::floor(n_param)) {
    throw ConfigError("flower_truncated: N must be an integer in [1, 30]");
  }
  const int n = static_cast<int>(n_param);
  const std::size_t m = static_cast<std::size_t>(n) + 1;
  const double span = std::ldexp(1.0, -n);
  const double norm = 1.0 - std::ldexp(1.0, -n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Index>(m), static_cast<Index>(m));
  std::vector<LatticeMeasure> f(m * m, LatticeMeasure::zero(span));
  std::vector<std::string> names{"0"};
  for (int i = 1; i <= n; ++i) {
    names.push_back(std::to_string(i));
    p(0, i) = std::ldexp(1.0, -i) / norm;
    p(i, 0) = 1.0;
    // 1/p_0i in lattice units: 2^(i+N) - 2^i.
    const std::int64_t inv = (std::int64_t{1} << (i + n)) - (std::int64_t{1} << i);
    f[static_cast<std::size_t>(i)] = LatticeMeasure::dirac(span, -inv);
    f[static_cast<std::size_t>(i) * m] =
        LatticeMeasure::dirac(span, inv + (std::int64_t{2} << n));
  }
  return MRWSpec::from_parts(std::move(names), std::move(p), std::move(f), span);
}

MRWSpec make_random_lattice(const nlohmann::json& params) {
  const double seed_d = param_or(params, "seed", -1.0);
  if (seed_d < 0.0) throw ConfigError("random_lattice: 'seed' is required");
  const auto seed = params.at("seed").get<std::uint64_t>();
  const double m_d = param_or(params, "m", 4.0);
  const double span = param_or(params, "span", 1.0);
  const double jump_d = param_or(params, "max_jump", 3.0);
  const double target = param_or(params, "drift_target", 0.25);
  if (!(m_d >= 1.0 && m_d <= 64.0) || m_d != std::floor(m_d)) {
    throw ConfigError("random_lattice: m must be an integer in [1, 64]");
  }
  if (!(jump_d >= 1.0 && jump_d <= 64.0) || jump_d != std::floor(jump_d)) {
    throw ConfigError("random_lattice: max_jump must be an integer in [1, 64]");
  }
  if (!(span > 0.0) || !std::isfinite(span)) {
    throw ConfigError("random_lattice: span must be positive");
  }
  const auto m = static_cast<std::size_t>(m_d);
  const auto jump = static_cast<std::int64_t>(jump_d);
  const double target_units = target / span;
  if (!(std::abs(target_units) < 0.9 * static_cast<double>(jump))) {
    throw ConfigError("random_lattice: drift_target infeasible for max_jump");
  }

  Rng rng(seed);
  Eigen::MatrixXd p(static_cast<Index>(m), static_cast<Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double u = 0.05 + rng.uniform();
      p(static_cast<Index>(i), static_cast<Index>(j)) = u;
      row += u;
    }
    p.row(static_cast<Index>(i)) /= row;
  }
  const std::size_t width = static_cast<std::size_t>(2 * jump + 1);
  std::vector<std::vector<double>> base(m * m, std::vector<double>(width));
  for (auto& w : base) {
    for (auto& x : w) x = 0.02 + rng.uniform();
  }

  // Exponential tilt w_k e^(theta k) shared by all laws; the stationary drift
  // is increasing in theta, so bisection hits the target.
  auto tilted = [&](double theta) {
    std::vector<std::vector<double>> out = base;
    for (auto& w : out) {
      double total = 0.0;
      for (std::size_t k = 0; k < width; ++k) {
        w[k] *= std::exp(theta * static_cast<double>(static_cast<std::int64_t>(k) - jump));
        total += w[k];
      }
      for (auto& x : w) x /= total;
    }
    return out;
  };
  auto build = [&](const std::vector<std::vector<double>>& laws) {
    std::vector<LatticeMeasure> f;
    f.reserve(m * m);
    for (const auto& w : laws) f.emplace_back(span, -jump, w);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < m; ++i) names.push_back("s" + std::to_string(i));
    return MRWSpec::from_parts(std::move(names), p, std::move(f), span);
  };
  const MRWSpec untilted = build(tilted(0.0));
  const Eigen::VectorXd pi = stationary_distribution(untilted).pi;
  auto drift_units = [&](double theta) {
    const auto laws = tilted(theta);
    double mu = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double mean = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
          mean += laws[i * m + j][k] *
                  static_cast<double>(static_cast<std::int64_t>(k) - jump);
        }
        mu += pi(static_cast<Index>(i)) * p(static_cast<Index>(i), static_cast<Index>(j)) * mean;
      }
    }
    return mu;
  };
  double lo = -20.0;
  double hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (drift_units(mid) < target_units) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return build(tilted(0.5 * (lo + hi)));
}

}  // namespace

std::size_t MRWSpec::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ModelError("unknown state '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::int64_t MRWSpec::max_up_jump() const noexcept {
  std::int64_t up = 0;
  for (const auto& f : increments_) {
    if (!f.is_zero()) up = std::max(up, f.max_index());
  }
  return up;
}

std::int64_t MRWSpec::max_down_jump() const noexcept {
  std::int64_t down = 0;
  for (const auto& f : increments_) {
    if (!f.is_zero()) down = std::max(down, -f.min_index());
  }
  return down;
}

std::int64_t MRWSpec::max_abs_jump() const noexcept {
  return std::max(max_up_jump(), max_down_jump());
}

MRWSpec MRWSpec::from_parts(std::vector<std::string> names,
                            Eigen::MatrixXd transition,
                            std::vector<LatticeMeasure> increments,
                            double span) {
  const std::size_t m = names.size();
  if (m == 0) throw ModelError("model has no states");
  if (static_cast<std::size_t>(transition.rows()) != m ||
      static_cast<std::size_t>(transition.cols()) != m) {
    throw ModelError("transition matrix shape does not match state count");
  }
  if (increments.size() != m * m) {
    throw ModelError("increment table shape does not match state count");
  }
  if (!(span > 0.0) || !std::isfinite(span)) {
    throw ModelError("lattice_span must be positive and finite");
  }
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != m) throw ModelError("duplicate state identifiers");

  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double pij = transition(static_cast<Index>(i), static_cast<Index>(j));
      if (!(pij >= 0.0) || !std::isfinite(pij)) {
        throw ModelError("negative or non-finite transition probability at " +
                         describe_pair(names, i, j));
      }
      row += pij;
      LatticeMeasure& f = increments[i * m + j];
      if (pij == 0.0) {
        f = LatticeMeasure::zero(span);
        continue;
      }
      if (!f.is_zero() && std::abs(f.span() - span) > 1e-12 * span) {
        throw ModelError("increment law span differs from lattice_span at " +
                         describe_pair(names, i, j));
      }
      for (double w : f.weights()) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
          throw ModelError("negative increment weight at " + describe_pair(names, i, j));
        }
      }
      const double mass = f.total_mass();
      if (std::abs(mass - 1.0) > kValidationTol) {
        std::ostringstream os;
        os << "increment law not normalized at " << describe_pair(names, i, j)
           << ": total weight " << mass;
        throw ModelError(os.str());
      }
    }
    if (std::abs(row - 1.0) > kValidationTol) {
      std::ostringstream os;
      os << "non-stochastic row " << i << " (" << names[i] << "): sum " << row;
      throw ModelError(os.str());
    }
  }
  for (bool reverse : {false, true}) {
    const auto missing = unreachable_states(transition, reverse);
    if (!missing.empty()) {
      std::ostringstream os;
      os << "reducible chain: state " << missing.front() << " ("
         << names[missing.front()] << ") "
         << (reverse ? "cannot reach" : "is unreachable from") << " state 0";
      throw ModelError(os.str());
    }
  }

  MRWSpec spec;
  spec.names_ = std::move(names);
  spec.transition_ = std::move(transition);
  spec.increments_ = std::move(increments);
  spec.span_ = span;
  return spec;
}

MRWSpec validate_spec(const RawModel& raw) {
  const std::size_t m = raw.states.size();
  if (m == 0) throw ModelError("model has no states");
  const double span = raw.lattice_span;
  if (!(span > 0.0) || !std::isfinite(span)) {
    throw ModelError("lattice_span must be positive and finite");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m; ++i) {
    if (!index.emplace(raw.states[i], i).second) {
      throw ModelError("duplicate state identifier '" + raw.states[i] + "'");
    }
  }
  auto lookup = [&](const std::string& name, std::size_t t) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw ModelError("transition " + std::to_string(t) + " references unknown state '" +
                       name + "'");
    }
    return it->second;
  };

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Index>(m), static_cast<Index>(m));
  std::vector<LatticeMeasure> f(m * m, LatticeMeasure::zero(span));
  std::vector<char> seen(m * m, 0);
  for (std::size_t t = 0; t < raw.transitions.size(); ++t) {
    const RawTransition& tr = raw.transitions[t];
    const std::size_t i = lookup(tr.from, t);
    const std::size_t j = lookup(tr.to, t);
    const std::string where = "transition " + std::to_string(t) + " " +
                              describe_pair(raw.states, i, j);
    if (seen[i * m + j]) throw ModelError("duplicate " + where);
    seen[i * m + j] = 1;
    if (!(tr.prob > 0.0) || !std::isfinite(tr.prob)) {
      throw ModelError("probability must be positive at " + where);
    }
    const auto& law = tr.increment;
    if (law.support.size() != law.weights.size() || law.support.empty()) {
      throw ModelError("support and weights differ in length or are empty at " + where);
    }
    std::map<std::int64_t, double> points;
    for (std::size_t k = 0; k < law.support.size(); ++k) {
      const double x = law.support[k];
      const double scaled = x / span;
      if (!std::isfinite(scaled) || std::abs(scaled) > 9.0e15) {
        throw ModelError("support point out of range at " + where);
      }
      const auto idx = static_cast<std::int64_t>(std::llround(scaled));
      if (std::abs(scaled - static_cast<double>(idx)) > 1e-9) {
        std::ostringstream os;
        os << "off-lattice support point " << x << " (index " << k << ") at " << where;
        throw ModelError(os.str());
      }
      const double w = law.weights[k];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ModelError("negative increment weight (index " + std::to_string(k) +
                         ") at " + where);
      }
      if (!points.emplace(idx, w).second) {
        throw ModelError("repeated support point (index " + std::to_string(k) + ") at " +
                         where);
      }
    }
    const std::int64_t lo = points.begin()->first;
    const std::int64_t hi = points.rbegin()->first;
    if (hi - lo > 50'000'000) {
      throw ModelError("increment support too wide for dense storage at " + where);
    }
    std::vector<double> dense(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (const auto& [k, w] : points) dense[static_cast<std::size_t>(k - lo)] = w;
    p(static_cast<Index>(i), static_cast<Index>(j)) = tr.prob;
    f[i * m + j] = LatticeMeasure(span, lo, std::move(dense));
  }
  return MRWSpec::from_parts(raw.states, std::move(p), std::move(f), span);
}

StationaryDistribution stationary_distribution(const MRWSpec& spec) {
  const Index m = static_cast<Index>(spec.size());
  Eigen::MatrixXd a = spec.transition().transpose() - Eigen::MatrixXd::Identity(m, m);
  a.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    throw ModelError("stationary distribution: singular linear system");
  }
  Eigen::VectorXd pi = lu.solve(rhs);
  pi /= pi.sum();
  const double residual =
      (pi.transpose() * spec.transition() - pi.transpose()).cwiseAbs().maxCoeff();
  if (!(residual <= kSolveTol) || !(pi.minCoeff() > 0.0)) {
    std::ostringstream os;
    os << "stationary distribution: residual " << residual << ", min entry "
       << pi.minCoeff();
    throw ModelError(os.str());
  }
  return {std::move(pi)};
}

DriftReport stationary_drift(const MRWSpec& spec, const StationaryDistribution& pi) {
  double mu = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
      if (spec.prob(i, j) == 0.0) continue;
      row += spec.prob(i, j) * spec.increment(i, j).first_moment();
    }
    mu += pi.pi(static_cast<Index>(i)) * row;
  }
  return {mu, true};
}

MRWSpec build_dual(const MRWSpec& spec, const StationaryDistribution& pi) {
  const std::size_t m = spec.size();
  Eigen::MatrixXd p(static_cast<Index>(m), static_cast<Index>(m));
  std::vector<LatticeMeasure> f(m * m, LatticeMeasure::zero(spec.lattice_span()));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      p(static_cast<Index>(i), static_cast<Index>(j)) =
          pi.pi(static_cast<Index>(j)) * spec.prob(j, i) / pi.pi(static_cast<Index>(i));
      f[i * m + j] = spec.increment(j, i);
    }
    // Absorb the solver's rounding so rows are stochastic to machine precision.
    p.row(static_cast<Index>(i)) /= p.row(static_cast<Index>(i)).sum();
  }
  return MRWSpec::from_parts(spec.state_names(), std::move(p), std::move(f),
                             spec.lattice_span());
}

std::vector<LatticeMeasure> stationary_increment_law(const MRWSpec& spec,
                                                     const StationaryDistribution& pi) {
  const std::size_t m = spec.size();
  std::vector<LatticeMeasure> out(m, LatticeMeasure::zero(spec.lattice_span()));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (spec.prob(j, i) == 0.0) continue;
      out[i] += (pi.pi(static_cast<Index>(j)) * spec.prob(j, i)) * spec.increment(j, i);
    }
  }
  return out;
}

KernelMatrix step_kernel(const MRWSpec& spec) {
  KernelMatrix g(spec.size(), spec.lattice_span());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      if (spec.prob(i, j) == 0.0) continue;
      g(i, j) = spec.prob(i, j) * spec.increment(i, j);
    }
  }
  return g;
}

MRWSpec model_zoo(const std::string& name, const nlohmann::json& params) {
  if (name == "two_cycle") return make_two_cycle();
  if (name == "simple_rw") return make_simple_rw(param_or(params, "p", 0.6));
  if (name == "remark2") return make_remark2();
  if (name == "flower_truncated") return make_flower_truncated(param_or(params, "N", 20.0));
  if (name == "random_lattice") return make_random_lattice(params);
  throw ConfigError("unknown model '" + name + "'");
}

RawModel raw_model_from_json(const nlohmann::json& j) {
  RawModel raw;
  try {
    for (const auto& s : j.at("states")) {
      if (s.is_string()) {
        raw.states.push_back(s.get<std::string>());
      } else if (s.is_number_integer()) {
        raw.states.push_back(std::to_string(s.get<std::int64_t>()));
      } else {
        throw ModelError("state identifiers must be strings or integers");
      }
    }
    auto state_ref = [&](const nlohmann::json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) {
        const auto k = v.get<std::int64_t>();
        if (k < 0 || static_cast<std::size_t>(k) >= raw.states.size()) {
          throw ModelError("state index " + std::to_string(k) + " out of range");
        }
        return raw.states[static_cast<std::size_t>(k)];
      }
      throw ModelError("transition endpoints must be state names or indices");
    };
    for (const auto& t : j.at("transitions")) {
      RawTransition tr;
      tr.from = state_ref(t.at("from"));
      tr.to = state_ref(t.at("to"));
      tr.prob = t.at("prob").get<double>();
      tr.increment.support = t.at("increment").at("support").get<std::vector<double>>();
      tr.increment.weights = t.at("increment").at("weights").get<std::vector<double>>();
      raw.transitions.push_back(std::move(tr));
    }
    raw.lattice_span = j.value("lattice_span", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model description: ") + e.what());
  }
  return raw;
}

nlohmann::json to_json(const MRWSpec& spec) {
  nlohmann::json transitions = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      if (spec.prob(i, j) == 0.0) continue;
      const LatticeMeasure& f = spec.increment(i, j);
      std::vector<double> support;
      std::vector<double> weights;
      for (std::int64_t k = f.min_index(); k <= f.max_index(); ++k) {
        const double w = f.weight_at(k);
        if (w == 0.0) continue;
        support.push_back(static_cast<double>(k) * spec.lattice_span());
        weights.push_back(w);
      }
      transitions.push_back({{"from", spec.state_names()[i]},
                             {"to", spec.state_names()[j]},
                             {"prob", spec.prob(i, j)},
                             {"increment", {{"support", support}, {"weights", weights}}}});
    }
  }
  return {{"states", spec.state_names()},
          {"transitions", std::move(transitions)},
          {"lattice_span", spec.lattice_span()}};
}

}  // namespace mrwlab
