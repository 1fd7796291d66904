#include "healthpredictor/dispersion.hpp"

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace hp;

namespace {

EmissionVector emission(std::initializer_list<double> q) {
  EmissionVector e;
  e.quantities = Eigen::Map<const Eigen::VectorXd>(q.begin(), static_cast<Eigen::Index>(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) e.pollutant_names.push_back("P" + std::to_string(k));
  return e;
}

SourceReceptorMatrix matrix(Eigen::MatrixXd gains) {
  SourceReceptorMatrix m;
  for (Eigen::Index k = 0; k < gains.rows(); ++k) m.pollutant_names.push_back("P" + std::to_string(k));
  for (Eigen::Index i = 0; i < gains.cols(); ++i) m.receptor_ids.push_back("R" + std::to_string(i));
  m.gains = std::move(gains);
  return m;
}

std::vector<ConcentrationPair> pairs_from(const SourceReceptorMatrix& g, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<ConcentrationPair> pairs;
  for (int i = 0; i < n; ++i) {
    EmissionVector e;
    e.pollutant_names = g.pollutant_names;
    e.quantities.resize(g.pollutants());
    for (Eigen::Index k = 0; k < e.quantities.size(); ++k) e.quantities[k] = u(rng);
    pairs.push_back({e, apply_source_receptor(e, g)});
  }
  return pairs;
}

}  // namespace

TEST_CASE("source-receptor examples") {
  const auto m = matrix((Eigen::MatrixXd(2, 2) << 0.0, 0.0, 1.0, 0.0).finished());
  CHECK(apply_source_receptor(emission({0, 0}), m).delta.isZero(0.0));
  const auto d = apply_source_receptor(emission({0, 2}), m).delta;
  CHECK(d(0, 1) == 2.0);
  CHECK(d.sum() == 2.0);

  const auto one = matrix((Eigen::MatrixXd(1, 2) << 0.1, 0.3).finished());
  const auto c = apply_source_receptor(emission({5}), one).delta;
  CHECK(c(0, 0) == doctest::Approx(0.5));
  CHECK(c(1, 0) == doctest::Approx(1.5));

  CHECK_ERROR_CODE(apply_source_receptor(emission({1, 2, 3}), m), ErrorCode::DimensionMismatch);
}

TEST_CASE("superposition and nonnegativity") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = matrix(test::random_matrix(rng, 4, 6, 0.0, 2.0));
    std::uniform_int_distribution<int> small(0, 1000);
    // Dyadic quantities and gains keep every product and sum exact.
    auto dyadic = [&] { return small(rng) / 64.0; };
    SourceReceptorMatrix exact = g;
    for (Eigen::Index i = 0; i < exact.gains.size(); ++i) exact.gains(i) = dyadic();
    const auto a = emission({dyadic(), dyadic(), dyadic(), dyadic()});
    const auto b = emission({dyadic(), dyadic(), dyadic(), dyadic()});
    EmissionVector sum = a;
    sum.quantities += b.quantities;
    const auto lhs = apply_source_receptor(sum, exact).delta;
    const Eigen::MatrixXd rhs = apply_source_receptor(a, exact).delta + apply_source_receptor(b, exact).delta;
    CHECK(lhs == rhs);
    CHECK((apply_source_receptor(a, g).delta.array() >= 0.0).all());
  }
}

TEST_CASE("plume matrix on the centreline at ground level") {
  PlumeParams p;
  p.effective_height = 0.0;
  p.receptor_offsets = {{1000.0, 0.0}};
  const auto m = build_plume_matrix(p, 1, 1);
  const double sy = p.sigma_y_coeff * std::pow(1000.0, 0.9);
  const double sz = p.sigma_z_coeff * std::pow(1000.0, 0.85);
  const double expected = kPlumeUnitConstant / (std::numbers::pi * p.wind_speed * sy * sz);
  CHECK(m.gains(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(m.receptor_ids == std::vector<std::string>{"R0"});
  CHECK(m.pollutant_names == std::vector<std::string>{"PM2.5"});
}

TEST_CASE("far crosswind receptors see nothing") {
  PlumeParams p;
  p.receptor_offsets = {{2000.0, 0.0}, {2000.0, 1e4}, {2000.0, 1e6}};
  const auto m = build_plume_matrix(p, 3, 4);
  CHECK(m.gains(0, 0) > 0.0);
  CHECK(m.gains(0, 1) < 1e-20 * m.gains(0, 0));
  CHECK(m.gains(0, 2) == 0.0);
}

TEST_CASE("doubling wind speed halves every gain") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> x(100.0, 50000.0), y(-2000.0, 2000.0);
  PlumeParams p;
  for (int i = 0; i < 20; ++i) p.receptor_offsets.emplace_back(x(rng), y(rng));
  const auto slow = build_plume_matrix(p, 20, 4);
  p.wind_speed *= 2.0;
  const auto fast = build_plume_matrix(p, 20, 4);
  for (Eigen::Index i = 0; i < slow.gains.size(); ++i)
    if (slow.gains(i) > 0.0) CHECK(std::abs(2.0 * fast.gains(i) / slow.gains(i) - 1.0) < 1e-12);
}

TEST_CASE("plume parameter validation") {
  PlumeParams p;
  p.receptor_offsets = {{1000.0, 0.0}};
  p.wind_speed = 0.0;
  CHECK_ERROR_CODE(build_plume_matrix(p, 1, 1), ErrorCode::InvalidParams);
  p.wind_speed = 4.0;
  p.receptor_offsets = {{-5.0, 0.0}};
  CHECK_ERROR_CODE(build_plume_matrix(p, 1, 1), ErrorCode::InvalidParams);
  p.receptor_offsets = {{1000.0, 0.0}};
  CHECK_ERROR_CODE(build_plume_matrix(p, 2, 1), ErrorCode::InvalidParams);
}

TEST_CASE("plume kernel works on other scalar types") {
  const float f = plume_kernel<float>(4.0f, 80.0f, 0.08f, 0.06f, 3000.0f, 10.0f);
  const double d = plume_kernel<double>(4.0, 80.0, 0.08, 0.06, 3000.0, 10.0);
  CHECK(f == doctest::Approx(d).epsilon(1e-5));
}

TEST_CASE("SR matrix CSV round trip") {
  std::mt19937_64 rng(10);
  const auto m = matrix(test::random_matrix(rng, 3, 5, 0.0, 1.0));
  const auto back = SourceReceptorMatrix::parse(m.format());
  CHECK(back.gains == m.gains);
  CHECK(back.receptor_ids == m.receptor_ids);
  CHECK(back.pollutant_names == m.pollutant_names);
  CHECK_ERROR_CODE(SourceReceptorMatrix::parse("pollutant,receptor_id,gain\nSO2,R0,-1\n"), ErrorCode::InvalidConfig);
}

TEST_CASE("fitting with zero epochs or zero emissions leaves weights alone") {
  std::mt19937_64 rng(12);
  const auto g = matrix(test::random_matrix(rng, 2, 3, 0.1, 1.0));
  const auto pairs = pairs_from(g, 5, rng);
  const DispersionLayer init(2, 3, 0.25);
  const auto same = fit_dispersion_layer(pairs, 0, 1.0, init);
  CHECK(same.raw() == init.raw());
  CHECK_FALSE(same.trained());

  EmissionVector zero;
  zero.quantities = Eigen::VectorXd::Zero(2);
  zero.pollutant_names = g.pollutant_names;
  const std::vector<ConcentrationPair> flat = {{zero, apply_source_receptor(zero, g)}};
  const auto still = fit_dispersion_layer(flat, 50, 1.0, init);
  CHECK(still.raw() == init.raw());

  CHECK_ERROR_CODE(fit_dispersion_layer({}, 10, 1.0), ErrorCode::EmptyTrainingSet);
}

TEST_CASE("fitting recovers a known matrix from noiseless pairs") {
  std::mt19937_64 rng(13);
  const auto g = matrix(test::random_matrix(rng, 4, 8, 0.1, 1.0));
  const auto pairs = pairs_from(g, 20, rng);
  const auto layer = fit_dispersion_layer(pairs, 2000, 50.0);
  CHECK(layer.trained());
  CHECK((layer.weights() - g.gains).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(dispersion_loss(layer, pairs) < 1e-8);
}

TEST_CASE("fitted gains stay nonnegative") {
  std::mt19937_64 rng(14);
  auto g = matrix(test::random_matrix(rng, 2, 4, 0.0, 1.0));
  g.gains(0, 0) = 0.0;
  const auto layer = fit_dispersion_layer(pairs_from(g, 10, rng), 500, 50.0);
  CHECK((layer.weights().array() >= 0.0).all());
}

TEST_CASE("dispersion loss gradient matches finite differences") {
  std::mt19937_64 rng(15);
  const auto g = matrix(test::random_matrix(rng, 3, 4, 0.1, 1.0));
  const auto pairs = pairs_from(g, 6, rng);
  const Eigen::MatrixXd raw = test::random_matrix(rng, 3, 4, -1.0, 1.0);
  CHECK(ad::grad_check([&](const ad::Var& r) { return dispersion_loss(r, pairs); }, raw) < 1e-4);
}
