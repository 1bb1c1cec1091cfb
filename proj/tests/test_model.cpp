#include <cmath>
#include <string>

#include "doctest.h"
#include "mrwlab/error.hpp"
#include "mrwlab/model.hpp"

using namespace mrwlab;
using nlohmann::json;

namespace {

// Power iteration on the lazy chain (I + P) / 2, which converges for any
// irreducible P.
Eigen::VectorXd power_stationary(const Eigen::MatrixXd& p) {
  const Eigen::Index m = p.rows();
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const Eigen::MatrixXd lazy = 0.5 * (Eigen::MatrixXd::Identity(m, m) + p);
  for (int it = 0; it < 200000; ++it) {
    const Eigen::RowVectorXd next = x * lazy;
    if ((next - x).cwiseAbs().maxCoeff() < 1e-16) {
      x = next;
      break;
    }
    x = next;
  }
  return x.transpose() / x.sum();
}

RawModel two_state(double p_ab, std::vector<double> support_ab) {
  RawModel raw;
  raw.states = {"a", "b"};
  raw.transitions = {{"a", "b", p_ab, {support_ab, std::vector<double>(support_ab.size(), 1.0 / support_ab.size())}},
                     {"b", "a", 1.0, {{-1.0}, {1.0}}}};
  if (p_ab < 1.0) raw.transitions.push_back({"a", "a", 1.0 - p_ab, {{0.0}, {1.0}}});
  return raw;
}

std::string error_of(const RawModel& raw) {
  try {
    validate_spec(raw);
  } catch (const ModelError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("two-cycle stationary law and drift") {
  const MRWSpec spec = model_zoo("two_cycle", json::object());
  const StationaryDistribution pi = stationary_distribution(spec);
  CHECK(pi.pi(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(pi.pi(1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(stationary_drift(spec, pi).mu == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("simple walk drift is p - q") {
  const MRWSpec spec = model_zoo("simple_rw", {{"p", 0.6}});
  CHECK(spec.size() == 1);
  CHECK(stationary_drift(spec, stationary_distribution(spec)).mu ==
        doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("remark model has zero drift") {
  const MRWSpec spec = model_zoo("remark2", json::object());
  CHECK(std::abs(stationary_drift(spec, stationary_distribution(spec)).mu) < 1e-14);
}

TEST_CASE("truncated flower puts half the stationary mass on the hub") {
  const MRWSpec spec = model_zoo("flower_truncated", {{"N", 20}});
  const StationaryDistribution pi = stationary_distribution(spec);
  CHECK(pi.pi(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(spec.size() == 21);
}

TEST_CASE("stationary law agrees with power iteration on random models") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const MRWSpec spec = model_zoo("random_lattice", {{"seed", seed}, {"m", 5}});
    const Eigen::VectorXd direct = stationary_distribution(spec).pi;
    const Eigen::VectorXd power = power_stationary(spec.transition());
    CHECK((direct - power).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("random lattice hits its drift target") {
  const MRWSpec spec =
      model_zoo("random_lattice", {{"seed", 3}, {"drift_target", 0.4}, {"span", 0.5}});
  const double mu = stationary_drift(spec, stationary_distribution(spec)).mu;
  CHECK(mu == doctest::Approx(0.4).epsilon(1e-9));
  CHECK_THROWS_AS(model_zoo("random_lattice", json::object()), ConfigError);
  CHECK_THROWS_AS(model_zoo("no_such_model", json::object()), ConfigError);
}

TEST_CASE("dual is an involution") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 11}});
  const StationaryDistribution pi = stationary_distribution(spec);
  const MRWSpec dual = build_dual(spec, pi);
  const MRWSpec back = build_dual(dual, stationary_distribution(dual));
  CHECK((back.transition() - spec.transition()).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    for (std::size_t j = 0; j < spec.size(); ++j) {
      CHECK((back.increment(i, j) - spec.increment(i, j)).total_variation() < 1e-12);
      CHECK((dual.increment(i, j) - spec.increment(j, i)).total_variation() == 0.0);
      CHECK(dual.prob(i, j) * pi.pi(static_cast<Eigen::Index>(i)) ==
            doctest::Approx(spec.prob(j, i) * pi.pi(static_cast<Eigen::Index>(j))));
    }
  }
  // Same stationary law and drift.
  CHECK((stationary_distribution(dual).pi - pi.pi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(stationary_drift(dual, stationary_distribution(dual)).mu ==
        doctest::Approx(stationary_drift(spec, pi).mu).epsilon(1e-12));
}

TEST_CASE("step kernel masses equal P") {
  const MRWSpec spec = model_zoo("random_lattice", {{"seed", 5}});
  CHECK((total_mass_matrix(step_kernel(spec)) - spec.transition()).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("validation names the offending row, transition or point") {
  CHECK(error_of(two_state(1.0, {1.0})).empty());
  {
    RawModel raw = two_state(1.0, {1.0});
    raw.transitions[0].prob = 0.7;
    const std::string msg = error_of(raw);
    CHECK(msg.find("non-stochastic row") != std::string::npos);
    CHECK(msg.find("a") != std::string::npos);
  }
  {
    RawModel raw = two_state(1.0, {1.0});
    raw.lattice_span = 1.0;
    raw.transitions[0].increment = {{0.5}, {1.0}};
    CHECK(error_of(raw).find("off-lattice") != std::string::npos);
  }
  {
    RawModel raw = two_state(1.0, {1.0});
    raw.transitions[0].increment.weights = {0.9};
    CHECK(error_of(raw).find("not normalized") != std::string::npos);
  }
  {
    RawModel raw;
    raw.states = {"a", "b"};
    raw.transitions = {{"a", "a", 1.0, {{1.0}, {1.0}}}, {"b", "a", 1.0, {{1.0}, {1.0}}}};
    CHECK(error_of(raw).find("reducible") != std::string::npos);
  }
  {
    RawModel raw = two_state(1.0, {1.0});
    raw.transitions.push_back(raw.transitions[0]);
    CHECK(!error_of(raw).empty());
  }
  {
    RawModel raw = two_state(1.0, {1.0});
    raw.transitions[0].to = "zzz";
    CHECK(!error_of(raw).empty());
  }
}

TEST_CASE("json round trip is canonical") {
  const json text = json::parse(R"({
    "states": ["x", "y"],
    "lattice_span": 0.5,
    "transitions": [
      {"from": 1, "to": 0, "prob": 1.0, "increment": {"support": [-0.5], "weights": [1]}},
      {"from": "x", "to": "y", "prob": 0.25, "increment": {"support": [1.0, 0.5], "weights": [0.5, 0.5]}},
      {"from": "x", "to": "x", "prob": 0.75, "increment": {"support": [0.0], "weights": [1]}}
    ]})");
  const MRWSpec spec = validate_spec(raw_model_from_json(text));
  const json canon = to_json(spec);
  const MRWSpec again = validate_spec(raw_model_from_json(canon));
  CHECK(to_json(again) == canon);
  CHECK(canon["transitions"][0]["from"] == "x");
  CHECK(canon["transitions"][0]["to"] == "x");
  CHECK(canon["transitions"][1]["increment"]["support"][0] == 0.5);
  CHECK(spec.max_up_jump() == 2);
  CHECK(spec.max_down_jump() == 1);
}
