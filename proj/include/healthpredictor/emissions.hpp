#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "healthpredictor/ingest.hpp"

namespace hp {

inline constexpr std::array<std::string_view, 4> kCanonicalPollutants = {"PM2.5", "SO2", "NOX", "VOC"};
inline constexpr std::array<std::string_view, 4> kZeroEmissionFuels = {"NUC", "WAT", "WND", "SUN"};

// kg of each pollutant per MWh generated by each fuel (rows fuels, columns
// pollutants).
struct EmissionFactorTable {
  std::vector<std::string> fuel_names;
  std::vector<std::string> pollutant_names;
  Eigen::MatrixXd factors;

  Eigen::Index fuels() const { return factors.rows(); }
  Eigen::Index pollutants() const { return factors.cols(); }

  // Nonnegative entries and all-zero rows for zero-emission fuels.
  void validate() const;
  // Row subset/reordering matching a series' fuel list.
  EmissionFactorTable aligned_to(const std::vector<std::string>& series_fuels) const;

  static EmissionFactorTable parse(const std::string& text, const std::string& source = "<memory>");
  static EmissionFactorTable load(const std::filesystem::path& path);
  std::string format() const;
};

struct EmissionVector {
  Eigen::VectorXd quantities;  // kg
  std::vector<std::string> pollutant_names;
};

// demand * factors^T * shares; bilinear in (shares, demand).
template <typename Derived>
Eigen::VectorXd emitted_mass(const Eigen::MatrixBase<Derived>& shares, const Eigen::MatrixXd& factors, double demand_mwh) {
  return demand_mwh * (factors.transpose() * shares);
}

EmissionVector emissions_from_mix(const Eigen::VectorXd& shares, const EmissionFactorTable& table, double demand_mwh);

EmissionVector aggregate_plant_emissions(const std::map<std::string, double>& allocation,
                                         const std::vector<PlantRecord>& plants,
                                         const std::vector<std::string>& pollutant_names);

}  // namespace hp
