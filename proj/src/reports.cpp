#include "mrwlab/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mrwlab/ladder_sim.hpp"
#include "mrwlab/rng.hpp"
#include "mrwlab/wiener_hopf.hpp"

namespace mrwlab {

namespace {

using json = nlohmann::json;

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// JSON has no infinities; encode them as null.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

std::uint64_t get_uint(const json& j, const char* key, std::uint64_t def,
                       std::uint64_t lo, std::uint64_t hi, const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0)) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  const auto x = v.get<std::uint64_t>();
  if (x < lo || x > hi) {
    throw ConfigError(where + "." + key + " = " + std::to_string(x) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

double get_real(const json& j, const char* key, double def, double lo, double hi,
                const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  const double x = v.get<double>();
  if (!(x >= lo && x <= hi)) {
    throw ConfigError(where + "." + key + " = " + fmt(x) + " outside [" + fmt(lo) + ", " +
                      fmt(hi) + "]");
  }
  return x;
}

bool get_bool(const json& j, const char* key, bool def, const std::string& where) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  return j.at(key).get<bool>();
}

std::size_t resolve_state(const json& j, const char* key, std::size_t def,
                          const std::optional<MRWSpec>& model, const std::string& where) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!model) throw ConfigError(where + "." + key + " needs a model");
  if (v.is_string()) {
    try {
      return model->index_of(v.get<std::string>());
    } catch (const ModelError& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
  if (v.is_number_unsigned() && v.get<std::uint64_t>() < model->size()) {
    return static_cast<std::size_t>(v.get<std::uint64_t>());
  }
  throw ConfigError(where + "." + key + " must be a state name or index");
}

constexpr std::uint64_t kBig = 1'000'000'000ULL;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

MRWSpec load_model(const json& src, const std::filesystem::path& base_dir) {
  check_keys(src, "model", {"zoo", "params", "path", "inline"});
  const int sources = static_cast<int>(src.contains("zoo")) +
                      static_cast<int>(src.contains("path")) +
                      static_cast<int>(src.contains("inline"));
  if (sources != 1) throw ConfigError("model needs exactly one of zoo, path, inline");
  if (src.contains("zoo")) {
    if (!src.at("zoo").is_string()) throw ConfigError("model.zoo must be a string");
    const json params = src.value("params", json::object());
    if (!params.is_object()) throw ConfigError("model.params must be an object");
    return model_zoo(src.at("zoo").get<std::string>(), params);
  }
  if (src.contains("params")) throw ConfigError("model.params only applies to zoo models");
  if (src.contains("path")) {
    if (!src.at("path").is_string()) throw ConfigError("model.path must be a string");
    std::filesystem::path p = src.at("path").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return validate_spec(raw_model_from_json(read_json_file(p)));
  }
  return validate_spec(raw_model_from_json(src.at("inline")));
}

std::string state_name(const MRWSpec& spec, std::size_t i) { return spec.state_names()[i]; }

json header(const std::string& command, const RunConfig& config) {
  json r;
  r["command"] = command;
  r["seed"] = config.seed ? json(*config.seed) : json(nullptr);
  if (config.model) r["model"] = to_json(*config.model);
  return r;
}

void finish(ReportBundle& b, bool pass) {
  b.exit_code = pass ? 0 : exit_code_for(ErrorKind::kIdentity);
  b.report["status"] = pass ? "pass" : "fail";
  b.report["exit_code"] = b.exit_code;
  b.summary += std::string("status: ") + (pass ? "pass" : "fail") + "\n";
}

const MRWSpec& need_model(const RunConfig& config, const char* command) {
  if (!config.model) throw ConfigError(std::string(command) + " requires a model");
  return *config.model;
}

std::uint64_t need_seed(const RunConfig& config, const char* command) {
  if (!config.seed) throw ConfigError(std::string(command) + " is stochastic and requires a seed");
  return *config.seed;
}

json kernel_summary(const LadderKernelResult& k) {
  return {{"direction", to_string(k.direction)},
          {"truncation_depth", k.truncation_depth},
          {"converged", k.converged},
          {"return_bound", num(k.return_bound)},
          {"row_defect", nums(k.row_defect)},
          {"row_mass", nums(k.row_mass())},
          {"kernel", to_json(k.kernel)}};
}

void kernel_rows(std::ostringstream& os, const char* name, const KernelMatrix& k,
                 const MRWSpec& spec) {
  for (std::size_t i = 0; i < k.dim(); ++i) {
    for (std::size_t j = 0; j < k.dim(); ++j) {
      const LatticeMeasure& mu = k(i, j);
      for (std::int64_t x = mu.min_index(); x <= mu.max_index() && !mu.is_zero(); ++x) {
        const double w = mu.weight_at(x);
        if (w == 0.0) continue;
        os << name << ',' << state_name(spec, i) << ',' << state_name(spec, j) << ','
           << x << ',' << fmt(static_cast<double>(x) * k.span()) << ',' << fmt(w) << '\n';
      }
    }
  }
}

json factorization_json(const FactorizationReport& f) {
  json rows = json::array();
  for (const auto& r : f.entry_residuals) rows.push_back(nums(r));
  return {{"max_entry_total_variation", num(f.max_entry_total_variation)},
          {"mass_residual", num(f.mass_residual)},
          {"entry_residuals", rows}};
}

json substochastic_json(const SubstochasticReport& s) {
  return {{"row_sums", nums(s.row_sums)},         {"rows_bounded", s.rows_bounded},
          {"strict_row", s.strict_row},           {"column_mass", nums(s.column_mass)},
          {"column_lower", nums(s.column_lower)}, {"column_upper", nums(s.column_upper)},
          {"column_residual", num(s.column_residual)},
          {"strict_column", s.strict_column},     {"pass", s.pass}};
}

json ladder_json(const LadderStationary& l, const MRWSpec& spec) {
  json support = json::array();
  for (std::size_t i = 0; i < l.support.size(); ++i) {
    if (l.support[i]) support.push_back(state_name(spec, i));
  }
  return {{"pi_ladder", nums(l.pi_ladder)}, {"pi_ladder_lower", nums(l.pi_ladder_lower)},
          {"pi_ladder_upper", nums(l.pi_ladder_upper)},
          {"c", num(l.c)},                  {"c_lower", num(l.c_lower)},
          {"c_upper", num(l.c_upper)},      {"support", support},
          {"density", nums(l.density)}};
}

json estimate_json(const MCEstimate& e) {
  json params = json::object();
  for (const auto& [k, v] : e.params) params[k] = num(v);
  return {{"value", num(e.value)},
          {"standard_error", num(e.standard_error)},
          {"replicates", e.replicates},
          {"seed", e.seed},
          {"params", params}};
}

std::string gate_message(const DriftReport& d) {
  std::ostringstream os;
  os << "stationary drift " << fmt(d.mu)
     << " is not positive and assume_dual_divergence is not set; truncation cannot converge";
  return os.str();
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "config",
             {"command", "model", "seed", "truncation", "m_max", "assume_dual_divergence",
              "inject_perturbation", "monte_carlo", "simulate", "counterexample"});
  RunConfig c;
  if (j.contains("model")) {
    c.model_source = j.at("model");
    c.model = load_model(j.at("model"), base_dir);
  }
  if (j.contains("seed")) {
    c.seed = get_uint(j, "seed", 0, 0, ~0ULL, "config");
  }
  const json empty = json::object();

  const json& tr = j.contains("truncation") ? j.at("truncation") : empty;
  check_keys(tr, "truncation", {"K", "tol", "K_max"});
  c.exact.truncation.initial_depth =
      static_cast<std::int64_t>(get_uint(tr, "K", 0, 0, 1ULL << 20, "truncation"));
  c.exact.truncation.tol = get_real(tr, "tol", 1e-10, 1e-15, 1e-2, "truncation");
  c.exact.truncation.max_depth =
      static_cast<std::int64_t>(get_uint(tr, "K_max", 1ULL << 14, 1, 1ULL << 20, "truncation"));
  c.exact.m_max = get_uint(j, "m_max", 20000, 1, 10'000'000, "config");
  c.exact.assume_dual_divergence = get_bool(j, "assume_dual_divergence", false, "config");
  c.exact.perturbation = get_real(j, "inject_perturbation", 0.0, -1.0, 1.0, "config");

  const json& mc = j.contains("monte_carlo") ? j.at("monte_carlo") : empty;
  check_keys(mc, "monte_carlo",
             {"initial_state", "occupation_reps", "n_ladder", "burn_in", "max_steps",
              "sigma0_reps", "n_back", "first_hit_reps", "first_hit_horizon"});
  MonteCarloOptions& m = c.monte_carlo;
  m.initial_state = resolve_state(mc, "initial_state", 0, c.model, "monte_carlo");
  m.occupation_reps = get_uint(mc, "occupation_reps", m.occupation_reps, 2, kBig, "monte_carlo");
  m.n_ladder = get_uint(mc, "n_ladder", m.n_ladder, 1, kBig, "monte_carlo");
  m.burn_in = get_uint(mc, "burn_in", m.burn_in, 0, kBig, "monte_carlo");
  m.max_steps = get_uint(mc, "max_steps", m.max_steps, 1, 100 * kBig, "monte_carlo");
  m.sigma0_reps = get_uint(mc, "sigma0_reps", m.sigma0_reps, 2, kBig, "monte_carlo");
  m.n_back = get_uint(mc, "n_back", m.n_back, 1, kBig, "monte_carlo");
  m.first_hit_reps = get_uint(mc, "first_hit_reps", m.first_hit_reps, 2, kBig, "monte_carlo");
  m.first_hit_horizon =
      get_uint(mc, "first_hit_horizon", m.first_hit_horizon, 1, kBig, "monte_carlo");

  const json& sim = j.contains("simulate") ? j.at("simulate") : empty;
  check_keys(sim, "simulate",
             {"initial_state", "n_steps", "replicates", "n_ladder", "burn_in", "max_steps",
              "coupling"});
  SimulateOptions& s = c.simulate;
  s.initial_state = resolve_state(sim, "initial_state", 0, c.model, "simulate");
  s.n_steps = get_uint(sim, "n_steps", s.n_steps, 1, kBig, "simulate");
  s.replicates = get_uint(sim, "replicates", s.replicates, 2, kBig, "simulate");
  s.n_ladder = get_uint(sim, "n_ladder", s.n_ladder, 1, kBig, "simulate");
  s.burn_in = get_uint(sim, "burn_in", s.burn_in, 0, kBig, "simulate");
  s.max_steps = get_uint(sim, "max_steps", s.max_steps, 1, 100 * kBig, "simulate");
  if (sim.contains("coupling")) {
    const json& cp = sim.at("coupling");
    check_keys(cp, "simulate.coupling", {"runs", "horizon", "first", "second"});
    s.coupling_runs = get_uint(cp, "runs", 100, 1, kBig, "simulate.coupling");
    s.coupling_horizon = get_uint(cp, "horizon", s.coupling_horizon, 1, kBig, "simulate.coupling");
    s.coupling_first = resolve_state(cp, "first", 0, c.model, "simulate.coupling");
    const std::size_t second_default = c.model && c.model->size() > 1 ? 1 : 0;
    s.coupling_second = resolve_state(cp, "second", second_default, c.model, "simulate.coupling");
  }

  const json& ce = j.contains("counterexample") ? j.at("counterexample") : empty;
  check_keys(ce, "counterexample", {"ratio", "n_steps", "N", "B", "replicates"});
  CounterexampleOptions& x = c.counterexample;
  x.ratio = get_real(ce, "ratio", x.ratio, 1e-6, 1.0 - 1e-6, "counterexample");
  x.n_steps = get_uint(ce, "n_steps", x.n_steps, 1, kBig, "counterexample");
  x.horizon = get_uint(ce, "N", x.horizon, 1, kBig, "counterexample");
  x.depth = get_real(ce, "B", x.depth, 0.0, 1e15, "counterexample");
  x.replicates = get_uint(ce, "replicates", x.replicates, 2, kBig, "counterexample");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_json_file(path), path.parent_path());
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kIdentity:
      return 1;
    case ErrorKind::kConfig:
    case ErrorKind::kModel:
      return 2;
    case ErrorKind::kNonConvergence:
      return 3;
  }
  return 2;
}

ReportBundle cmd_validate(const RunConfig& config) {
  const MRWSpec& spec = need_model(config, "validate");
  const StationaryDistribution pi = stationary_distribution(spec);
  const DriftReport drift = stationary_drift(spec, pi);
  const MRWSpec dual = build_dual(spec, pi);
  const DriftReport dual_drift = stationary_drift(dual, stationary_distribution(dual));

  ReportBundle b;
  b.report = header("validate", config);
  std::vector<double> mean_out;
  std::ostringstream csv;
  csv << "state,pi,mean_increment\n";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
      mean += spec.prob(i, j) * spec.increment(i, j).first_moment();
    }
    mean_out.push_back(mean);
    csv << state_name(spec, i) << ',' << fmt(pi.pi(static_cast<Eigen::Index>(i))) << ','
        << fmt(mean) << '\n';
  }
  b.report["results"] = {
      {"states", spec.state_names()},
      {"stationary", nums(std::vector<double>(pi.pi.data(), pi.pi.data() + pi.pi.size()))},
      {"mean_increment", nums(mean_out)},
      {"drift", num(drift.mu)},
      {"drift_exists", drift.exists},
      {"dual_drift", num(dual_drift.mu)},
      {"lattice_span", spec.lattice_span()},
      {"max_up_jump", spec.max_up_jump()},
      {"max_down_jump", spec.max_down_jump()}};
  b.tables["stationary.csv"] = csv.str();
  std::ostringstream sum;
  sum << "model: " << spec.size() << " states, span " << fmt(spec.lattice_span()) << "\n";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    sum << "  pi[" << state_name(spec, i) << "] = " << fmt(pi.pi(static_cast<Eigen::Index>(i)))
        << "\n";
  }
  sum << "stationary drift: " << fmt(drift.mu) << "\n";
  b.summary = sum.str();
  finish(b, true);
  return b;
}

ReportBundle cmd_factorize(const RunConfig& config) {
  const MRWSpec& spec = need_model(config, "factorize");
  const StationaryDistribution pi = stationary_distribution(spec);
  const DriftReport drift = stationary_drift(spec, pi);
  if (!(drift.mu > 0.0) && !config.exact.assume_dual_divergence) {
    throw NonConvergenceError(gate_message(drift));
  }
  const MRWSpec dual = build_dual(spec, pi);
  LadderKernelResult asc = strict_ascending_kernel(spec, config.exact.truncation);
  if (config.exact.perturbation != 0.0) {
    asc.kernel(0, 0) += LatticeMeasure::dirac(spec.lattice_span(), 1, config.exact.perturbation);
  }
  const LadderKernelResult desc = weak_descending_kernel(dual, config.exact.truncation);
  const EscapeProbabilities esc = escape_from_kernel(desc);
  const KernelMatrix star = star_kernel(desc.kernel, pi);
  const FactorizationReport fact = verify_factorization(step_kernel(spec), star, asc.kernel);
  const SubstochasticReport sub = check_substochastic(desc, pi);

  ReportBundle b;
  b.report = header("factorize", config);
  b.report["results"] = {
      {"drift", num(drift.mu)},
      {"ascending", kernel_summary(asc)},
      {"descending", kernel_summary(desc)},
      {"escape", {{"lower", nums(esc.lower)}, {"upper", nums(esc.upper)}}},
      {"star_descending", to_json(star)},
      {"factorization", factorization_json(fact)},
      {"substochastic", substochastic_json(sub)}};
  std::ostringstream csv;
  csv << "kernel,from,to,index,height,weight\n";
  kernel_rows(csv, "ascending", asc.kernel, spec);
  kernel_rows(csv, "dual_descending", desc.kernel, spec);
  kernel_rows(csv, "star_descending", star, spec);
  b.tables["kernels.csv"] = csv.str();

  const bool pass = fact.max_entry_total_variation <= 1e-9 && fact.mass_residual <= 1e-9 &&
                    sub.pass;
  std::ostringstream sum;
  sum << "ascending depth K = " << asc.truncation_depth << ", descending depth K = "
      << desc.truncation_depth << "\n"
      << "factorization residual (max entry TV): " << fmt(fact.max_entry_total_variation) << "\n"
      << "mass factorization residual: " << fmt(fact.mass_residual) << "\n"
      << "column escape residual: " << fmt(sub.column_residual) << "\n"
      << "substochastic: rows bounded " << sub.rows_bounded << ", strict row " << sub.strict_row
      << ", strict column " << sub.strict_column << "\n";
  b.summary = sum.str();
  finish(b, pass);
  return b;
}

ReportBundle cmd_verify(const RunConfig& config) {
  const MRWSpec& spec = need_model(config, "verify");
  MonteCarloOptions mc = config.monte_carlo;
  mc.seed = need_seed(config, "verify");
  const StationaryDistribution pi = stationary_distribution(spec);
  const DriftReport drift = stationary_drift(spec, pi);
  if (!(drift.mu > 0.0) && !config.exact.assume_dual_divergence) {
    throw NonConvergenceError(gate_message(drift));
  }
  const ExactPipeline ex = run_exact_pipeline(spec, config.exact);
  const VerificationReport ver = cross_validate(spec, ex, mc);

  ReportBundle b;
  b.report = header("verify", config);
  json checks = json::array();
  std::ostringstream ids;
  ids << "identity_id,relation,lhs,rhs,tolerance,pass\n";
  for (const IdentityCheck& c : ver.checks) {
    checks.push_back(to_json(c));
    ids << c.id << ',' << c.relation << ',' << fmt(c.lhs) << ',' << fmt(c.rhs) << ','
        << fmt(c.tolerance) << ',' << (c.pass ? "true" : "false") << '\n';
  }
  json occupation = json::array();
  for (const MCEstimate& e : ver.occupation.per_state) occupation.push_back(estimate_json(e));
  json sigma0 = json::array();
  for (const MCEstimate& e : ver.sigma0) sigma0.push_back(estimate_json(e));
  json first_hit = json::array();
  for (const MCEstimate& e : ver.first_hit) first_hit.push_back(estimate_json(e));

  b.report["results"] = {
      {"drift", num(ex.drift.mu)},
      {"stationary", nums(std::vector<double>(ex.pi.pi.data(), ex.pi.pi.data() + ex.pi.pi.size()))},
      {"truncation_depth",
       {{"ascending", ex.ascending.truncation_depth},
        {"descending", ex.descending.truncation_depth}}},
      {"escape", {{"lower", nums(ex.escape.lower)}, {"upper", nums(ex.escape.upper)}}},
      {"ladder_exact", ladder_json(ex.exact, spec)},
      {"ladder_nullvector", ladder_json(ex.nullvector.ladder, spec)},
      {"ladder_direct", nums(ex.direct.pi_ladder)},
      {"nu", {{"steps", ex.nu.steps}, {"defect", num(ex.nu.defect)},
              {"state_defect", nums(ex.nu.state_defect)}}},
      {"expected_epoch",
       {{"truncated_mean", num(ex.expected.truncated_mean)},
        {"tail_mass", num(ex.expected.tail_mass)},
        {"identity_value", num(ex.expected.identity_value)},
        {"identity_lower", num(ex.expected.identity_lower)},
        {"identity_upper", num(ex.expected.identity_upper)},
        {"per_state_lower", nums(ex.expected.per_state_lower)},
        {"per_state_bound", nums(ex.expected.per_state_bound)}}},
      {"monte_carlo",
       {{"occupation", occupation},
        {"occupation_complete", ver.occupation.complete},
        {"sigma0", sigma0},
        {"first_hit", first_hit}}},
      {"checks", checks}};
  b.tables["identities.csv"] = ids.str();

  std::ostringstream nu;
  nu << "state,m,nu\n";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t k = 0; k < ex.nu.steps; ++k) {
      const double v = ex.nu.nu[i][k];
      if (v > 0.0) nu << state_name(spec, i) << ',' << (k + 1) << ',' << fmt(v) << '\n';
    }
  }
  b.tables["nu.csv"] = nu.str();

  std::ostringstream lad;
  lad << "state,pi,pi_ladder,pi_ladder_nullvector,occupation_mc,occupation_se\n";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    lad << state_name(spec, i) << ',' << fmt(ex.pi.pi(static_cast<Eigen::Index>(i))) << ','
        << fmt(ex.exact.pi_ladder[i]) << ',' << fmt(ex.nullvector.ladder.pi_ladder[i]) << ','
        << fmt(ver.occupation.per_state[i].value) << ','
        << fmt(ver.occupation.per_state[i].standard_error) << '\n';
  }
  b.tables["ladder_stationary.csv"] = lad.str();

  std::ostringstream sum;
  sum << "c = " << fmt(ex.exact.c) << " in [" << fmt(ex.exact.c_lower) << ", "
      << fmt(ex.exact.c_upper) << "]\n";
  for (const IdentityCheck& c : ver.checks) {
    sum << (c.pass ? "PASS " : "FAIL ") << c.id << ": lhs " << fmt(c.lhs) << ", rhs "
        << fmt(c.rhs) << ", tol " << fmt(c.tolerance) << "\n";
  }
  b.summary = sum.str();
  finish(b, ver.all_pass);
  return b;
}

ReportBundle cmd_simulate(const RunConfig& config) {
  const MRWSpec& spec = need_model(config, "simulate");
  const std::uint64_t seed = need_seed(config, "simulate");
  const SimulateOptions& so = config.simulate;
  const std::size_t m = spec.size();

  struct PathStats {
    LadderExtraction asc;
    std::size_t descending_epochs = 0;
    bool maximal = true;
  };
  std::vector<PathStats> stats(so.replicates);
  const std::uint64_t path_base = stream_seed(seed, 0);
  parallel_for(so.replicates, [&](std::size_t r) {
    const PathSample path = simulate_path(spec, so.initial_state, so.n_steps,
                                          stream_seed(path_base, r));
    stats[r].asc = extract_strict_ascending(path);
    stats[r].maximal = ladder_maximality_holds(path, stats[r].asc);
    stats[r].descending_epochs = extract_weak_descending(path).epochs.size() - 1;
  });

  std::vector<double> counts(m, 0.0);
  double total = 0.0;
  double h_min = std::numeric_limits<double>::infinity();
  double h_max = -std::numeric_limits<double>::infinity();
  bool maximal = true;
  std::ostringstream ep;
  ep << "replicate,index,epoch,state,height\n";
  json per_path = json::array();
  for (std::size_t r = 0; r < so.replicates; ++r) {
    const LadderExtraction& a = stats[r].asc;
    maximal = maximal && stats[r].maximal;
    for (std::size_t n = 0; n < a.epochs.size(); ++n) {
      ep << r << ',' << n << ',' << a.epochs[n] << ',' << state_name(spec, a.states[n]) << ','
         << fmt(a.heights[n]) << '\n';
      if (n == 0) continue;
      counts[a.states[n]] += 1.0;
      total += 1.0;
      const double dh = a.heights[n] - a.heights[n - 1];
      h_min = std::min(h_min, dh);
      h_max = std::max(h_max, dh);
    }
    per_path.push_back({{"ascending_epochs", a.epochs.size() - 1},
                        {"descending_epochs", stats[r].descending_epochs},
                        {"maximality", stats[r].maximal}});
  }
  json state_counts = json::object();
  for (std::size_t i = 0; i < m; ++i) state_counts[state_name(spec, i)] = counts[i];

  ReportBundle b;
  b.report = header("simulate", config);
  json results = {{"initial_state", state_name(spec, so.initial_state)},
                  {"n_steps", so.n_steps},
                  {"replicates", so.replicates},
                  {"paths", per_path},
                  {"ladder_state_counts", state_counts},
                  {"ladder_epochs_total", total},
                  {"height_increment_min", num(h_min)},
                  {"height_increment_max", num(h_max)},
                  {"maximality", maximal}};
  b.tables["ladder_epochs.csv"] = ep.str();
  std::ostringstream sum;
  sum << so.replicates << " paths of " << so.n_steps << " steps from "
      << state_name(spec, so.initial_state) << "\n";
  sum << "ladder epochs (index >= 1): " << fmt(total) << "\n";
  for (std::size_t i = 0; i < m; ++i) {
    sum << "  ladder state " << state_name(spec, i) << ": " << fmt(counts[i]) << "\n";
  }
  sum << "ladder maximality: " << (maximal ? "holds" : "VIOLATED") << "\n";
  bool pass = maximal;

  const DriftReport drift = stationary_drift(spec, stationary_distribution(spec));
  if (drift.mu > 0.0 || config.exact.assume_dual_divergence) {
    const OccupationEstimate occ = estimate_ladder_occupation(
        spec, so.initial_state, so.n_ladder, so.burn_in, stream_seed(seed, 1), so.replicates,
        so.max_steps, config.exact.assume_dual_divergence);
    json per_state = json::array();
    std::ostringstream csv;
    csv << "state,occupation,standard_error\n";
    for (std::size_t i = 0; i < m; ++i) {
      per_state.push_back(estimate_json(occ.per_state[i]));
      csv << state_name(spec, i) << ',' << fmt(occ.per_state[i].value) << ','
          << fmt(occ.per_state[i].standard_error) << '\n';
      sum << "  occupation " << state_name(spec, i) << ": " << fmt(occ.per_state[i].value)
          << " +- " << fmt(occ.per_state[i].standard_error) << "\n";
    }
    results["occupation"] = {{"per_state", per_state},
                             {"complete", occ.complete},
                             {"incomplete_replicates", occ.incomplete_replicates}};
    b.tables["occupation.csv"] = csv.str();
  } else {
    results["occupation"] = nullptr;
    sum << "occupation estimate skipped: stationary drift " << fmt(drift.mu)
        << " is not positive\n";
  }

  if (so.coupling_runs > 0) {
    std::vector<CouplingReport> runs(so.coupling_runs);
    const std::uint64_t base = stream_seed(seed, 2);
    parallel_for(so.coupling_runs, [&](std::size_t r) {
      runs[r] = coupling_experiment(spec, so.coupling_first, so.coupling_second,
                                    so.coupling_horizon, stream_seed(base, r));
    });
    std::size_t coupled = 0, observed = 0, matched = 0;
    std::ostringstream csv;
    csv << "run,coupled,coupling_time,y,tau,rho,compared_epochs,matched_tail\n";
    auto opt = [](const std::optional<std::size_t>& v) {
      return v ? std::to_string(*v) : std::string();
    };
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const CouplingReport& c = runs[r];
      if (c.coupled) ++coupled;
      if (c.tau && c.rho) {
        ++observed;
        if (c.matched_tail) ++matched;
      }
      csv << r << ',' << c.coupled << ',' << c.coupling_time << ',' << fmt(c.y) << ','
          << opt(c.tau) << ',' << opt(c.rho) << ',' << c.compared_epochs << ','
          << c.matched_tail << '\n';
    }
    results["coupling"] = {{"runs", so.coupling_runs},
                           {"horizon", so.coupling_horizon},
                           {"coupled", coupled},
                           {"observed", observed},
                           {"matched", matched}};
    b.tables["coupling.csv"] = csv.str();
    sum << "coupling: " << observed << "/" << so.coupling_runs << " observed, " << matched
        << " matched\n";
    pass = pass && matched == observed;
  }
  b.report["results"] = results;
  b.summary = sum.str();
  finish(b, pass);
  return b;
}

ReportBundle cmd_counterexample(const RunConfig& config) {
  const std::uint64_t seed = need_seed(config, "counterexample");
  const CounterexampleOptions& o = config.counterexample;
  const FlowerWeights weights{o.ratio};

  const PathSample primal = simulate_flower(weights, o.n_steps, stream_seed(seed, 0), false);
  const PathSample dual = simulate_flower(weights, o.n_steps, stream_seed(seed, 1), true);
  const FlowerAudit a = audit_flower_path(primal, weights, false);
  const FlowerAudit d = audit_flower_path(dual, weights, true);
  const double oracle = flower_min_tail_probability(weights, o.horizon, o.depth);
  const MCEstimate mc =
      estimate_flower_min_tail(weights, o.horizon, o.depth, stream_seed(seed, 2), o.replicates);
  // The sample SE vanishes when every replicate agrees; fall back on the
  // binomial SE under the oracle value.
  const double se_oracle =
      std::sqrt(oracle * (1.0 - oracle) / static_cast<double>(o.replicates));
  const double tol = 3.0 * std::max(mc.standard_error, se_oracle);
  const bool mc_ok = std::abs(mc.value - oracle) <= tol;

  double primal_min = 0.0;
  for (double s : primal.partial_sums) primal_min = std::min(primal_min, s);

  ReportBundle b;
  b.report = header("counterexample", config);
  auto audit_json = [](const FlowerAudit& f) {
    return json{{"steps_checked", f.steps_checked},
                {"formula_failures", f.formula_failures},
                {"lower_bound_failures", f.lower_bound_failures}};
  };
  b.report["results"] = {{"ratio", o.ratio},
                         {"n_steps", o.n_steps},
                         {"audit_walk", audit_json(a)},
                         {"audit_dual", audit_json(d)},
                         {"walk_minimum", num(primal_min)},
                         {"dual_final", num(dual.partial_sums.back())},
                         {"min_tail",
                          {{"N", o.horizon},
                           {"B", o.depth},
                           {"oracle", num(oracle)},
                           {"estimate", estimate_json(mc)},
                           {"tolerance", num(tol)},
                           {"pass", mc_ok}}}};
  std::ostringstream csv;
  csv << "N,B,oracle,estimate,standard_error,tolerance,pass\n"
      << o.horizon << ',' << fmt(o.depth) << ',' << fmt(oracle) << ',' << fmt(mc.value) << ','
      << fmt(mc.standard_error) << ',' << fmt(tol) << ',' << (mc_ok ? "true" : "false") << '\n';
  b.tables["min_tail.csv"] = csv.str();

  std::ostringstream sum;
  sum << "walk audit: " << a.steps_checked << " steps, " << a.formula_failures
      << " formula failures\n"
      << "dual audit: " << d.steps_checked << " steps, " << d.formula_failures
      << " formula failures, " << d.lower_bound_failures << " lower bound failures\n"
      << "P_0(min S_n <= -B), N = " << o.horizon << ", B = " << fmt(o.depth) << ": oracle "
      << fmt(oracle) << ", MC " << fmt(mc.value) << " +- " << fmt(mc.standard_error) << "\n";
  b.summary = sum.str();
  finish(b, a.formula_failures == 0 && d.formula_failures == 0 &&
                d.lower_bound_failures == 0 && mc_ok);
  return b;
}

ReportBundle run_command(const std::string& command, const RunConfig& config) {
  try {
    if (command == "validate") return cmd_validate(config);
    if (command == "factorize") return cmd_factorize(config);
    if (command == "verify") return cmd_verify(config);
    if (command == "simulate") return cmd_simulate(config);
    if (command == "counterexample") return cmd_counterexample(config);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const Error& e) {
    ReportBundle b;
    b.report = header(command, config);
    b.exit_code = exit_code_for(e.kind());
    static const char* kinds[] = {"config", "model", "non_convergence", "identity"};
    b.report["status"] = "error";
    b.report["exit_code"] = b.exit_code;
    b.report["error"] = {{"kind", kinds[static_cast<int>(e.kind())]}, {"message", e.what()}};
    b.summary = std::string("error (") + kinds[static_cast<int>(e.kind())] + "): " + e.what() + "\n";
    return b;
  }
}

void write_bundle(const ReportBundle& bundle, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + (out_dir / name).string() + "'");
    out << text;
  };
  put("report.json", bundle.report.dump(2) + "\n");
  put("summary.txt", bundle.summary);
  for (const auto& [name, text] : bundle.tables) put(name, text);
}

}  // namespace mrwlab
