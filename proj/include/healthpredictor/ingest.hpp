#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hp {

// Canonical fuel vocabulary, in the order every series and table uses.
inline constexpr std::array<std::string_view, 8> kCanonicalFuels = {"COL", "NG",  "OIL", "NUC",
                                                                    "WAT", "WND", "SUN", "OTH"};
inline constexpr std::string_view kExcluded = "EXCLUDED";

bool is_canonical_fuel(std::string_view name);
std::size_t canonical_rank(std::string_view name);

enum class CellFlag : std::uint8_t { Observed, Imputed, Missing };

struct FuelMixRecord {
  std::int64_t timestamp = 0;  // hours since the dataset epoch
  Eigen::VectorXd shares;
  std::vector<CellFlag> flags;

  bool has_missing() const;
};

struct FuelMixSeries {
  std::vector<FuelMixRecord> records;
  std::vector<std::string> fuel_names;

  std::size_t size() const { return records.size(); }
  std::size_t fuels() const { return fuel_names.size(); }
  std::optional<std::size_t> fuel_index(std::string_view name) const;

  // N x F matrix of shares (missing cells read as NaN).
  Eigen::MatrixXd shares() const;
  std::size_t count(CellFlag flag) const;

  // Checks dimensions, unique names, hourly timestamps and share bounds.
  void validate() const;
};

// Raw source label -> canonical fuel, or EXCLUDED (nullopt).
class FuelCategoryMap {
 public:
  void add(const std::string& raw_label, const std::string& canonical);
  std::optional<std::string> lookup(const std::string& raw_label) const;
  bool contains(const std::string& raw_label) const { return entries_.count(raw_label) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  static FuelCategoryMap load(const std::filesystem::path& path);
  static FuelCategoryMap parse(const std::string& text, const std::string& source = "<memory>");
  // Every canonical fuel mapped to itself.
  static FuelCategoryMap identity();

 private:
  std::map<std::string, std::string> entries_;
};

struct PlantRecord {
  std::string plant_id;
  std::string region_id;
  std::string fuel;
  double capacity_share_basis = 0.0;  // MWh/yr
  Eigen::VectorXd emission_rates;     // kg/MWh, one per pollutant
};

struct PlantRegistry {
  std::vector<std::string> pollutant_names;
  std::vector<PlantRecord> plants;

  static PlantRegistry load(const std::filesystem::path& path);
  static PlantRegistry parse(const std::string& text, const std::string& source = "<memory>");
};

// Accepts an integer hour index or an ISO-8601 hour such as
// 2023-01-01T05, 2023-01-01T05:00 or "2023-01-01 05:00:00Z".
std::int64_t parse_timestamp(const std::string& field, const std::string& context);

FuelMixSeries load_fuel_mix(const std::filesystem::path& path, const FuelCategoryMap& category_map);
FuelMixSeries parse_fuel_mix(const std::string& text, const FuelCategoryMap& category_map,
                             const std::string& source = "<memory>");

// Two-step gap filling: t-1/t+1 interpolation, then the mean of observed
// values at the same position on the nearest days that have any.
FuelMixSeries impute_missing(const FuelMixSeries& series, int period = 24);

FuelMixSeries normalize_mix(const FuelMixSeries& series);

std::map<std::string, double> allocate_generation(double demand_mwh, const FuelMixRecord& mix,
                                                  const std::vector<std::string>& fuel_names,
                                                  const std::vector<PlantRecord>& plants);

// Canonical dataset CSV: `timestamp,<fuel...>` with full-precision shares.
std::string format_fuel_mix(const FuelMixSeries& series);

}  // namespace hp
