#include "healthpredictor/emissions.hpp"

#include "healthpredictor/ingest.hpp"
#include "support.hpp"

using namespace hp;

namespace {

EmissionFactorTable coal_gas_wind() {
  EmissionFactorTable t;
  t.fuel_names = {"COL", "NG", "WND"};
  t.pollutant_names = {"SO2"};
  t.factors = Eigen::Vector3d(1.5, 0.1, 0.0);
  return t;
}

}  // namespace

TEST_CASE("single-fuel and zero-emission mixes") {
  const auto t = coal_gas_wind();
  CHECK(emissions_from_mix(Eigen::Vector3d(1, 0, 0), t, 1.0).quantities[0] == 1.5);
  CHECK(emissions_from_mix(Eigen::Vector3d(0, 0, 1), t, 1.0).quantities.isZero(0.0));
}

TEST_CASE("blended mix scales with demand") {
  const auto e = emissions_from_mix(Eigen::Vector3d(0.5, 0.5, 0), coal_gas_wind(), 2.0);
  CHECK(e.quantities[0] == doctest::Approx(2.0 * (0.75 + 0.05)));
  CHECK(e.pollutant_names == std::vector<std::string>{"SO2"});
}

TEST_CASE("emissions shape errors") {
  CHECK_ERROR_CODE(emissions_from_mix(Eigen::Vector2d(0.5, 0.5), coal_gas_wind(), 1.0), ErrorCode::DimensionMismatch);
}

TEST_CASE("factor table validation and alignment") {
  auto t = coal_gas_wind();
  t.validate();
  t.factors(2, 0) = 0.01;
  CHECK_ERROR_CODE(t.validate(), ErrorCode::InvalidConfig);
  t.factors(2, 0) = 0.0;
  t.factors(1, 0) = -1.0;
  CHECK_ERROR_CODE(t.validate(), ErrorCode::InvalidConfig);

  const auto aligned = coal_gas_wind().aligned_to({"WND", "COL"});
  CHECK(aligned.fuel_names == std::vector<std::string>{"WND", "COL"});
  CHECK(aligned.factors(1, 0) == 1.5);
  CHECK_ERROR_CODE(coal_gas_wind().aligned_to({"OIL"}), ErrorCode::DimensionMismatch);
}

TEST_CASE("factor table CSV round trip") {
  const auto t = EmissionFactorTable::parse("fuel,PM2.5,SO2\nCOL,0.2,1\nSUN,0,0\n");
  CHECK(t.fuels() == 2);
  CHECK(t.pollutants() == 2);
  const auto back = EmissionFactorTable::parse(t.format());
  CHECK(back.factors == t.factors);
  CHECK(back.fuel_names == t.fuel_names);
}

TEST_CASE("plant aggregation examples") {
  std::vector<PlantRecord> plants = {{"p", "BA", "COL", 1.0, Eigen::VectorXd::Constant(1, 0.8)}};
  CHECK(aggregate_plant_emissions({{"p", 1.0}}, plants, {"NOX"}).quantities[0] == 0.8);
  CHECK(aggregate_plant_emissions({}, plants, {"NOX"}).quantities.isZero(0.0));

  std::vector<PlantRecord> two = {{"a", "BA", "COL", 1.0, Eigen::VectorXd::Constant(1, 1.0)},
                                  {"b", "BA", "COL", 1.0, Eigen::VectorXd::Constant(1, 2.0)}};
  CHECK(aggregate_plant_emissions({{"a", 0.75}, {"b", 0.25}}, two, {"SO2"}).quantities[0] == doctest::Approx(1.25));
  CHECK_ERROR_CODE(aggregate_plant_emissions({{"zz", 1.0}}, two, {"SO2"}), ErrorCode::UnknownPlant);
}

TEST_CASE("emissions are linear in the mix") {
  std::mt19937_64 rng(1);
  EmissionFactorTable t;
  for (auto f : kCanonicalFuels) t.fuel_names.emplace_back(f);
  for (auto p : kCanonicalPollutants) t.pollutant_names.emplace_back(p);
  for (int trial = 0; trial < 200; ++trial) {
    t.factors = test::random_matrix(rng, 8, 4, 0.0, 2.0);
    const Eigen::VectorXd x = test::random_simplex(rng, 8), y = test::random_simplex(rng, 8);
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto blend = emissions_from_mix(a * x + (1 - a) * y, t, 3.0).quantities;
    const Eigen::VectorXd parts = a * emissions_from_mix(x, t, 3.0).quantities + (1 - a) * emissions_from_mix(y, t, 3.0).quantities;
    CHECK((blend - parts).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, parts.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("plant route agrees with the fuel route when plant rates are uniform per fuel") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::string> fuels = {"COL", "NG", "OIL", "OTH"};
  const std::vector<std::string> pollutants = {"PM2.5", "SO2", "NOX", "VOC"};
  for (int trial = 0; trial < 200; ++trial) {
    EmissionFactorTable t{fuels, pollutants, test::random_matrix(rng, 4, 4, 0.0, 2.0)};
    std::vector<PlantRecord> plants;
    for (std::size_t f = 0; f < fuels.size(); ++f) {
      const int n = 1 + static_cast<int>(u(rng) * 4);
      for (int i = 0; i < n; ++i)
        plants.push_back({fuels[f] + std::to_string(i), "BA", fuels[f], 0.1 + u(rng),
                          t.factors.row(static_cast<Eigen::Index>(f)).transpose()});
    }
    const double demand = 1.0 + 100.0 * u(rng);
    const FuelMixRecord mix{0, test::random_simplex(rng, 4), std::vector<CellFlag>(4, CellFlag::Observed)};
    const auto via_plants =
        aggregate_plant_emissions(allocate_generation(demand, mix, fuels, plants), plants, pollutants).quantities;
    const auto via_fuels = emissions_from_mix(mix.shares, t, demand).quantities;
    for (Eigen::Index k = 0; k < 4; ++k)
      CHECK(std::abs(via_plants[k] - via_fuels[k]) <= 1e-9 * std::max(1e-300, std::abs(via_fuels[k])));
  }
}

TEST_CASE("raising a factor never lowers any output") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    EmissionFactorTable t{{"COL", "NG", "OIL"}, {"PM2.5", "SO2"}, test::random_matrix(rng, 3, 2, 0.0, 1.0)};
    const Eigen::VectorXd mix = test::random_simplex(rng, 3);
    const auto before = emissions_from_mix(mix, t, 1.0).quantities;
    t.factors(trial % 3, trial % 2) += 0.5;
    const auto after = emissions_from_mix(mix, t, 1.0).quantities;
    CHECK((after.array() >= before.array()).all());
  }
}
