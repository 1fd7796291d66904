#include "healthpredictor/emissions.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

void EmissionFactorTable::validate() const {
  if (static_cast<std::size_t>(factors.rows()) != fuel_names.size() ||
      static_cast<std::size_t>(factors.cols()) != pollutant_names.size())
    throw Error(ErrorCode::DimensionMismatch, "emission factor table labels do not match its shape");
  if ((factors.array() < 0.0).any() || !factors.allFinite())
    throw Error(ErrorCode::InvalidConfig, "emission factors must be finite and nonnegative");
  for (std::size_t f = 0; f < fuel_names.size(); ++f) {
    const bool zero_fuel =
        std::find(kZeroEmissionFuels.begin(), kZeroEmissionFuels.end(), fuel_names[f]) != kZeroEmissionFuels.end();
    if (zero_fuel && !factors.row(static_cast<Eigen::Index>(f)).isZero(0.0))
      throw Error(ErrorCode::InvalidConfig, "zero-emission fuel '" + fuel_names[f] + "' has nonzero factors");
  }
}

EmissionFactorTable EmissionFactorTable::aligned_to(const std::vector<std::string>& series_fuels) const {
  EmissionFactorTable out;
  out.fuel_names = series_fuels;
  out.pollutant_names = pollutant_names;
  out.factors.resize(static_cast<Eigen::Index>(series_fuels.size()), pollutants());
  for (std::size_t i = 0; i < series_fuels.size(); ++i) {
    auto it = std::find(fuel_names.begin(), fuel_names.end(), series_fuels[i]);
    if (it == fuel_names.end())
      throw Error(ErrorCode::DimensionMismatch, "no emission factors for fuel '" + series_fuels[i] + "'");
    out.factors.row(static_cast<Eigen::Index>(i)) = factors.row(it - fuel_names.begin());
  }
  return out;
}

EmissionFactorTable EmissionFactorTable::parse(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header.size() < 2 || table.header[0] != "fuel")
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'fuel,<pollutant...>'");
  EmissionFactorTable out;
  out.pollutant_names.assign(table.header.begin() + 1, table.header.end());
  out.factors.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(out.pollutant_names.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    const auto& row = table.rows[r];
    if (!is_canonical_fuel(row[0])) throw Error(ErrorCode::UnmappedLabel, ctx + ": fuel '" + row[0] + "' is not canonical");
    if (std::find(out.fuel_names.begin(), out.fuel_names.end(), row[0]) != out.fuel_names.end())
      throw Error(ErrorCode::MalformedRow, ctx + ": duplicate fuel '" + row[0] + "'");
    out.fuel_names.push_back(row[0]);
    for (std::size_t k = 0; k < out.pollutant_names.size(); ++k)
      out.factors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = csv::parse_double(row[k + 1], ctx);
  }
  out.validate();
  return out;
}

EmissionFactorTable EmissionFactorTable::load(const std::filesystem::path& path) {
  return parse(csv::read_file(path), path.string());
}

std::string EmissionFactorTable::format() const {
  std::ostringstream out;
  out << "fuel";
  for (const auto& p : pollutant_names) out << ',' << p;
  out << '\n';
  for (Eigen::Index f = 0; f < fuels(); ++f) {
    out << fuel_names[static_cast<std::size_t>(f)];
    for (Eigen::Index k = 0; k < pollutants(); ++k) out << ',' << csv::format_double(factors(f, k));
    out << '\n';
  }
  return out.str();
}

EmissionVector emissions_from_mix(const Eigen::VectorXd& shares, const EmissionFactorTable& table, double demand_mwh) {
  if (shares.size() != table.fuels())
    throw Error(ErrorCode::DimensionMismatch, "mix has " + std::to_string(shares.size()) + " fuels, table has " +
                                                  std::to_string(table.fuels()));
  if (!(demand_mwh >= 0.0)) throw Error(ErrorCode::InvalidParams, "demand must be nonnegative");
  return {emitted_mass(shares, table.factors, demand_mwh), table.pollutant_names};
}

EmissionVector aggregate_plant_emissions(const std::map<std::string, double>& allocation,
                                         const std::vector<PlantRecord>& plants,
                                         const std::vector<std::string>& pollutant_names) {
  std::unordered_map<std::string, const PlantRecord*> by_id;
  for (const auto& p : plants) by_id.emplace(p.plant_id, &p);

  EmissionVector out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pollutant_names.size())), pollutant_names};
  for (const auto& [id, mwh] : allocation) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::UnknownPlant, "plant '" + id + "' is not in the registry");
    if (it->second->emission_rates.size() != out.quantities.size())
      throw Error(ErrorCode::DimensionMismatch, "plant '" + id + "' has wrong pollutant count");
    out.quantities += mwh * it->second->emission_rates;
  }
  return out;
}

}  // namespace hp
