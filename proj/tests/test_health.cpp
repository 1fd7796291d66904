#include "healthpredictor/health.hpp"

#include <cmath>

#include "healthpredictor/synth.hpp"
#include "support.hpp"

using namespace hp;

namespace {

ReceptorProfile profile(const std::string& id, double pop, bool internal, double rate) {
  return {id, pop, internal, {{"mortality", rate}}};
}

ConcentrationResponse response(Eigen::VectorXd alpha, ResponseForm form = ResponseForm::LogLinear) {
  return {"mortality", std::move(alpha), form};
}

// One fuel, one pollutant, one receptor.
PipelineConfig one_hop(double factor, double gain, double pop, double rate, double alpha, double usd, bool internal) {
  PipelineConfig c;
  c.emission_factors = {{"COL"}, {"PM2.5"}, Eigen::MatrixXd::Constant(1, 1, factor)};
  c.matrix = {{"PM2.5"}, {"R0"}, Eigen::MatrixXd::Constant(1, 1, gain)};
  c.receptors = {profile("R0", pop, internal, rate)};
  c.responses = {response(Eigen::VectorXd::Constant(1, alpha))};
  c.valuations = {{"mortality", usd}};
  return c;
}

PipelineConfig random_config(std::mt19937_64& rng, ResponseForm form) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PipelineConfig c = default_pipeline_config(5);
  c.emission_factors.factors.topRows(3) = test::random_matrix(rng, 3, 4, 0.0, 2.0);
  c.emission_factors.factors.row(7) = test::random_matrix(rng, 1, 4, 0.0, 2.0);
  for (auto& r : c.receptors) r.internal = u(rng) < 0.5;
  for (auto& cr : c.responses) cr.form = form;
  return c;
}

}  // namespace

TEST_CASE("log-linear response at the anchor points") {
  const auto p = profile("R", 100000.0, true, 0.01);
  CHECK(delta_health(p, response(Eigen::Vector2d(0.3, 0.1)), Eigen::Vector2d::Zero()) == 0.0);
  const double half = delta_health(p, response(Eigen::VectorXd::Constant(1, 1.0)), Eigen::VectorXd::Constant(1, std::log(2.0)));
  CHECK(std::abs(half - 500.0) <= 1e-12 * 500.0);
}

TEST_CASE("log-linear and linear forms agree for small exposures") {
  const auto p = profile("R", 250000.0, false, 0.008);
  for (double exposure : {1e-4, 5e-5, 1e-6, 1e-9}) {
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(1, exposure);
    const double log_linear = delta_health(p, response(Eigen::VectorXd::Ones(1)), d);
    const double linear = delta_health(p, response(Eigen::VectorXd::Ones(1), ResponseForm::Linear), d);
    CHECK(std::abs(log_linear - linear) <= 1e-4 * linear);
  }
}

TEST_CASE("log-linear response is increasing, concave and bounded") {
  double previous = 0.0, previous_step = INFINITY;
  for (int i = 1; i <= 200; ++i) {
    const double y = log_linear_cases(0.01, 1000.0, 0.05 * i);
    CHECK(y > previous);
    CHECK(y - previous < previous_step);
    CHECK(y <= 10.0);
    previous_step = y - previous;
    previous = y;
  }
}

TEST_CASE("delta_health errors") {
  const auto p = profile("R", 1.0, true, 0.01);
  CHECK_ERROR_CODE(delta_health(p, response(Eigen::Vector2d(1, 1)), Eigen::Vector3d::Zero()), ErrorCode::DimensionMismatch);
  CHECK_ERROR_CODE(delta_health(p, response(Eigen::VectorXd::Ones(1)), Eigen::VectorXd::Constant(1, -0.1)),
                   ErrorCode::InvalidParams);
}

TEST_CASE("monetize examples") {
  CHECK(monetize({{"mortality", 500.0}}, {{"mortality", 100.0}}) == 50000.0);
  CHECK(monetize({{"mortality", 0.0}}, {{"mortality", 100.0}}) == 0.0);
  CHECK(monetize({{"a", 2.0}, {"b", 3.0}}, {{"a", 10.0}, {"b", 5.0}}) == 35.0);
  CHECK_ERROR_CODE(monetize({{"a", 1.0}}, {{"b", 1.0}}), ErrorCode::MissingValuation);
}

TEST_CASE("internal/external split examples") {
  const std::vector<ReceptorProfile> ps = {profile("a", 1, true, 0), profile("b", 1, false, 0)};
  const auto s = split_internal_external({{"a", 2.0}, {"b", 3.0}}, ps);
  CHECK(s.internal == 2.0);
  CHECK(s.external == 3.0);
  const auto all = split_internal_external({{"a", 2.0}}, ps);
  CHECK(all.internal == 2.0);
  CHECK(all.external == 0.0);
  CHECK_ERROR_CODE(split_internal_external({{"c", 1.0}}, ps), ErrorCode::UnknownReceptor);
}

TEST_CASE("split preserves the receptor total exactly") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> cents(0, 10'000'000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ReceptorProfile> ps;
    std::map<std::string, double> costs;
    for (int i = 0; i < 5; ++i) {
      const std::string id = "r" + std::to_string(i);
      ps.push_back(profile(id, 1, u(rng) < 0.5, 0));
      costs[id] = cents(rng) / 128.0;
    }
    const auto s = split_internal_external(costs, ps);
    double total = 0.0;
    for (const auto& [id, usd] : costs) total += usd;
    CHECK(s.total() == total);
  }
}

TEST_CASE("all-renewable mixes give a zero signal") {
  const PipelineConfig c = default_pipeline_config();
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(8);
    mix.segment(3, 4) = test::random_simplex(rng, 4);
    const auto s = impact_per_mwh(mix, c);
    CHECK(s.internal_cost == 0.0);
    CHECK(s.external_cost == 0.0);
  }
}

TEST_CASE("one-hop chain equals the hand composition") {
  const double factor = 0.3, gain = 1.7, pop = 50000, rate = 2e-6, alpha = 0.006, usd = 9e6;
  const auto s = impact_per_mwh(Eigen::VectorXd::Ones(1), one_hop(factor, gain, pop, rate, alpha, usd, true));
  const double by_hand = usd * rate * pop * (1.0 - std::exp(-alpha * gain * factor));
  CHECK(s.internal_cost == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(s.external_cost == 0.0);
  const auto ext = impact_per_mwh(Eigen::VectorXd::Ones(1), one_hop(factor, gain, pop, rate, alpha, usd, false));
  CHECK(ext.internal_cost == 0.0);
  CHECK(ext.external_cost == s.internal_cost);
}

TEST_CASE("signal of a blend lies between the endpoint signals") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_config(rng, ResponseForm::LogLinear);
    const Eigen::VectorXd x = test::random_simplex(rng, 8), y = test::random_simplex(rng, 8);
    const auto sx = impact_per_mwh(x, c), sy = impact_per_mwh(y, c), sb = impact_per_mwh(0.5 * (x + y), c);
    const double tol = 1e-9 * std::max(sx.total(), sy.total());
    CHECK(sb.total() >= std::min(sx.total(), sy.total()) - tol);
    CHECK(sb.total() <= std::max(sx.total(), sy.total()) + tol);
    // Concavity of the log-linear form puts the blend at or above the chord.
    CHECK(sb.total() >= 0.5 * (sx.total() + sy.total()) - tol);
  }
}

TEST_CASE("linear responses make the signal exactly affine in the mix") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_config(rng, ResponseForm::Linear);
    const Eigen::VectorXd x = test::random_simplex(rng, 8), y = test::random_simplex(rng, 8);
    const auto sx = impact_per_mwh(x, c), sy = impact_per_mwh(y, c), sb = impact_per_mwh(0.5 * (x + y), c);
    CHECK(sb.internal_cost == doctest::Approx(0.5 * (sx.internal_cost + sy.internal_cost)).epsilon(1e-12));
    CHECK(sb.external_cost == doctest::Approx(0.5 * (sx.external_cost + sy.external_cost)).epsilon(1e-12));
  }
}

TEST_CASE("raising an emission factor never lowers either component") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 200; ++trial) {
    auto c = random_config(rng, trial % 2 ? ResponseForm::Linear : ResponseForm::LogLinear);
    const Eigen::VectorXd mix = test::random_simplex(rng, 8);
    const auto before = impact_per_mwh(mix, c);
    const int fuel = std::array{0, 1, 2, 7}[static_cast<std::size_t>(trial % 4)];
    c.emission_factors.factors(fuel, trial % 4) += 0.3;
    const auto after = impact_per_mwh(mix, c);
    CHECK(after.internal_cost >= before.internal_cost);
    CHECK(after.external_cost >= before.external_cost);
  }
}

TEST_CASE("internal plus external equals the receptor total") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_config(rng, ResponseForm::LogLinear);
    const Eigen::VectorXd mix = test::random_simplex(rng, 8);
    const auto costs = receptor_costs(mix, c);
    double internal = 0.0, external = 0.0;
    for (const auto& r : c.receptors) (r.internal ? internal : external) += costs.at(r.receptor_id);
    const auto s = impact_per_mwh(mix, c);
    CHECK(s.internal_cost == internal);
    CHECK(s.external_cost == external);
  }
}

TEST_CASE("pipeline config round trips through its CSV files") {
  const auto dir = test::scratch_dir("health_config");
  const PipelineConfig c = default_pipeline_config(4);
  write_pipeline_config(c, dir);
  const PipelineConfig back = load_pipeline_config(dir);
  CHECK(back.emission_factors.factors == c.emission_factors.factors);
  CHECK(back.matrix.gains == c.matrix.gains);
  REQUIRE(back.responses.size() == c.responses.size());
  for (std::size_t i = 0; i < c.responses.size(); ++i) {
    CHECK(back.responses[i].alpha == c.responses[i].alpha);
    CHECK(back.responses[i].form == c.responses[i].form);
  }
  const Eigen::VectorXd mix = Eigen::VectorXd::Constant(8, 0.125);
  CHECK(impact_per_mwh(mix, back).total() == impact_per_mwh(mix, c).total());
}

TEST_CASE("config validation") {
  PipelineConfig c = default_pipeline_config(3);
  c.valuations.pop_back();
  CHECK_ERROR_CODE(c.validate(), ErrorCode::MissingValuation);
  c = default_pipeline_config(3);
  c.receptors.pop_back();
  CHECK_ERROR_CODE(c.validate(), ErrorCode::UnknownReceptor);
}

TEST_CASE("signal CSV round trip and checks") {
  const std::vector<HealthSignal> s = {{5, 1.25, 0.5}, {6, 0.0, 3.0}};
  const auto back = parse_signals(format_signals(s));
  REQUIRE(back.size() == 2);
  CHECK(back[1].external_cost == 3.0);
  CHECK_ERROR_CODE(parse_signals("timestamp,internal_usd_per_mwh,external_usd_per_mwh\n0,-1,0\n"),
                   ErrorCode::MalformedRow);
}
