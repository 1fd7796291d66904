#include "healthpredictor/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool all_digits(const std::string& s, std::size_t from = 0) {
  if (from >= s.size()) return false;
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(from), s.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

bool is_canonical_fuel(std::string_view name) {
  return std::find(kCanonicalFuels.begin(), kCanonicalFuels.end(), name) != kCanonicalFuels.end();
}

std::size_t canonical_rank(std::string_view name) {
  auto it = std::find(kCanonicalFuels.begin(), kCanonicalFuels.end(), name);
  if (it == kCanonicalFuels.end())
    throw Error(ErrorCode::UnmappedLabel, "'" + std::string(name) + "' is not a canonical fuel");
  return static_cast<std::size_t>(it - kCanonicalFuels.begin());
}

bool FuelMixRecord::has_missing() const {
  return std::find(flags.begin(), flags.end(), CellFlag::Missing) != flags.end();
}

std::optional<std::size_t> FuelMixSeries::fuel_index(std::string_view name) const {
  for (std::size_t i = 0; i < fuel_names.size(); ++i)
    if (fuel_names[i] == name) return i;
  return std::nullopt;
}

Eigen::MatrixXd FuelMixSeries::shares() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(fuels()));
  for (std::size_t t = 0; t < records.size(); ++t)
    out.row(static_cast<Eigen::Index>(t)) = records[t].shares.transpose();
  return out;
}

std::size_t FuelMixSeries::count(CellFlag flag) const {
  std::size_t n = 0;
  for (const auto& r : records) n += static_cast<std::size_t>(std::count(r.flags.begin(), r.flags.end(), flag));
  return n;
}

void FuelMixSeries::validate() const {
  std::set<std::string> seen(fuel_names.begin(), fuel_names.end());
  if (seen.size() != fuel_names.size())
    throw Error(ErrorCode::DimensionMismatch, "duplicate fuel names in series");
  const auto f = static_cast<Eigen::Index>(fuels());
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& r = records[t];
    if (r.shares.size() != f || r.flags.size() != fuels())
      throw Error(ErrorCode::DimensionMismatch, "record " + std::to_string(t) + " has wrong dimension");
    if (t > 0 && r.timestamp != records[t - 1].timestamp + 1)
      throw Error(ErrorCode::NonMonotonicTimestamp,
                  "timestamp " + std::to_string(r.timestamp) + " does not follow " +
                      std::to_string(records[t - 1].timestamp) + " by one hour");
  }
}

void FuelCategoryMap::add(const std::string& raw_label, const std::string& canonical) {
  if (canonical != kExcluded && !is_canonical_fuel(canonical))
    throw Error(ErrorCode::InvalidConfig,
                "category map target '" + canonical + "' for '" + raw_label + "' is not a canonical fuel");
  entries_[raw_label] = canonical;
}

std::optional<std::string> FuelCategoryMap::lookup(const std::string& raw_label) const {
  auto it = entries_.find(raw_label);
  if (it == entries_.end()) throw Error(ErrorCode::UnmappedLabel, "column '" + raw_label + "' is not in the category map");
  if (it->second == kExcluded) return std::nullopt;
  return it->second;
}

FuelCategoryMap FuelCategoryMap::parse(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header.size() != 2 || table.header[0] != "raw_label" || table.header[1] != "canonical")
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'raw_label,canonical'");
  FuelCategoryMap map;
  for (const auto& row : table.rows) map.add(row[0], row[1]);
  return map;
}

FuelCategoryMap FuelCategoryMap::load(const std::filesystem::path& path) {
  return parse(csv::read_file(path), path.string());
}

FuelCategoryMap FuelCategoryMap::identity() {
  FuelCategoryMap map;
  for (auto f : kCanonicalFuels) map.add(std::string(f), std::string(f));
  return map;
}

PlantRegistry PlantRegistry::parse(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  static const std::array<std::string, 4> fixed = {"plant_id", "region_id", "fuel", "capacity_basis"};
  if (table.header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), table.header.begin()))
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'plant_id,region_id,fuel,capacity_basis,...'");
  PlantRegistry reg;
  reg.pollutant_names.assign(table.header.begin() + 4, table.header.end());
  const auto k = static_cast<Eigen::Index>(reg.pollutant_names.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    PlantRecord p;
    p.plant_id = row[0];
    p.region_id = row[1];
    p.fuel = row[2];
    if (!is_canonical_fuel(p.fuel)) throw Error(ErrorCode::UnmappedLabel, ctx + ": fuel '" + p.fuel + "' is not canonical");
    p.capacity_share_basis = csv::parse_double(row[3], ctx);
    if (!(p.capacity_share_basis >= 0.0)) throw Error(ErrorCode::MalformedRow, ctx + ": negative capacity basis");
    p.emission_rates.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      p.emission_rates[j] = csv::parse_double(row[4 + static_cast<std::size_t>(j)], ctx);
      if (!(p.emission_rates[j] >= 0.0)) throw Error(ErrorCode::MalformedRow, ctx + ": negative emission rate");
    }
    reg.plants.push_back(std::move(p));
  }
  return reg;
}

PlantRegistry PlantRegistry::load(const std::filesystem::path& path) {
  return parse(csv::read_file(path), path.string());
}

std::int64_t parse_timestamp(const std::string& field, const std::string& context) {
  const std::string s = csv::trim(field);
  if (all_digits(s) || (s.size() > 1 && s[0] == '-' && all_digits(s, 1))) return csv::parse_int(s, context);

  // YYYY-MM-DD[T ]HH[:MM[:SS]][Z]
  auto fail = [&]() -> std::int64_t {
    throw Error(ErrorCode::MalformedRow, context + ": bad timestamp '" + field + "'");
  };
  if (s.size() < 13 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ')) return fail();
  std::string rest = s.substr(13);
  if (!rest.empty() && rest.back() == 'Z') rest.pop_back();
  if (!(rest.empty() || rest == ":00" || rest == ":00:00")) return fail();
  const std::string ys = s.substr(0, 4), ms = s.substr(5, 2), ds = s.substr(8, 2), hs = s.substr(11, 2);
  if (!all_digits(ys) || !all_digits(ms) || !all_digits(ds) || !all_digits(hs)) return fail();
  const std::chrono::year_month_day ymd{std::chrono::year{std::stoi(ys)}, std::chrono::month{static_cast<unsigned>(std::stoi(ms))},
                                        std::chrono::day{static_cast<unsigned>(std::stoi(ds))}};
  const int hour = std::stoi(hs);
  if (!ymd.ok() || hour > 23) return fail();
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 24 + hour;
}

FuelMixSeries parse_fuel_mix(const std::string& text, const FuelCategoryMap& category_map, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header.empty() || table.header[0] != "timestamp")
    throw Error(ErrorCode::MalformedRow, source + ": first column must be 'timestamp'");

  // Resolve every raw column before touching data.
  std::vector<std::optional<std::string>> targets;
  std::set<std::string> present;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    targets.push_back(category_map.lookup(table.header[c]));
    if (targets.back()) present.insert(*targets.back());
  }

  FuelMixSeries series;
  series.fuel_names.assign(present.begin(), present.end());
  std::sort(series.fuel_names.begin(), series.fuel_names.end(),
            [](const std::string& a, const std::string& b) { return canonical_rank(a) < canonical_rank(b); });
  std::vector<Eigen::Index> slot(targets.size(), -1);
  for (std::size_t c = 0; c < targets.size(); ++c)
    if (targets[c]) slot[c] = static_cast<Eigen::Index>(*series.fuel_index(*targets[c]));

  const auto f = static_cast<Eigen::Index>(series.fuels());
  series.records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    FuelMixRecord rec;
    rec.timestamp = parse_timestamp(row[0], ctx);
    rec.shares = Eigen::VectorXd::Zero(f);
    rec.flags.assign(series.fuels(), CellFlag::Observed);
    for (std::size_t c = 0; c < targets.size(); ++c) {
      if (slot[c] < 0) continue;
      const auto idx = static_cast<std::size_t>(slot[c]);
      const std::string& cell = row[c + 1];
      if (cell.empty()) {
        rec.flags[idx] = CellFlag::Missing;
        continue;
      }
      const double v = csv::parse_double(cell, ctx);
      if (!std::isfinite(v)) throw Error(ErrorCode::MalformedRow, ctx + ": non-finite value");
      rec.shares[slot[c]] += v;
    }
    for (std::size_t i = 0; i < rec.flags.size(); ++i)
      if (rec.flags[i] == CellFlag::Missing) rec.shares[static_cast<Eigen::Index>(i)] = kNaN;
    if (!series.records.empty() && rec.timestamp != series.records.back().timestamp + 1)
      throw Error(ErrorCode::NonMonotonicTimestamp, ctx + ": timestamp " + row[0] + " does not follow the previous row by one hour");
    series.records.push_back(std::move(rec));
  }
  return series;
}

FuelMixSeries load_fuel_mix(const std::filesystem::path& path, const FuelCategoryMap& category_map) {
  return parse_fuel_mix(csv::read_file(path), category_map, path.string());
}

FuelMixSeries impute_missing(const FuelMixSeries& series, int period) {
  if (period < 1) throw Error(ErrorCode::InvalidParams, "imputation period must be positive");
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  if (n < 2 * period)
    throw Error(ErrorCode::UnimputableSeries,
                "series has " + std::to_string(n) + " records, need at least " + std::to_string(2 * period));

  const auto observed = [&](std::ptrdiff_t t, std::size_t f) {
    return t >= 0 && t < n && series.records[static_cast<std::size_t>(t)].flags[f] == CellFlag::Observed;
  };
  const auto value = [&](std::ptrdiff_t t, std::size_t f) {
    return series.records[static_cast<std::size_t>(t)].shares[static_cast<Eigen::Index>(f)];
  };

  FuelMixSeries out = series;
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    auto& rec = out.records[static_cast<std::size_t>(t)];
    for (std::size_t f = 0; f < series.fuels(); ++f) {
      if (rec.flags[f] != CellFlag::Missing) continue;
      double filled = kNaN;
      if (observed(t - 1, f) && observed(t + 1, f)) {
        filled = 0.5 * (value(t - 1, f) + value(t + 1, f));
      } else {
        for (std::ptrdiff_t radius = 1;; ++radius) {
          const std::ptrdiff_t back = t - radius * period, ahead = t + radius * period;
          if (back < 0 && ahead >= n) break;
          double sum = 0.0;
          int donors = 0;
          for (std::ptrdiff_t d : {back, ahead}) {
            if (observed(d, f)) {
              sum += value(d, f);
              ++donors;
            }
          }
          if (donors > 0) {
            filled = sum / donors;
            break;
          }
        }
      }
      if (std::isnan(filled))
        throw Error(ErrorCode::UnimputableSeries,
                    "no observed donor for fuel '" + series.fuel_names[f] + "' at hour-of-period " +
                        std::to_string(((t % period) + period) % period));
      rec.shares[static_cast<Eigen::Index>(f)] = filled;
      rec.flags[f] = CellFlag::Imputed;
    }
  }
  return out;
}

FuelMixSeries normalize_mix(const FuelMixSeries& series) {
  FuelMixSeries out = series;
  for (auto& rec : out.records) {
    if (rec.has_missing())
      throw Error(ErrorCode::UnimputableSeries, "normalize_mix saw a missing cell at t=" + std::to_string(rec.timestamp));
    if ((rec.shares.array() < 0.0).any())
      throw Error(ErrorCode::NegativeShare, "negative share at t=" + std::to_string(rec.timestamp));
    const double total = rec.shares.sum();
    if (!(total > 0.0)) throw Error(ErrorCode::ZeroRowSum, "shares sum to zero at t=" + std::to_string(rec.timestamp));
    rec.shares /= total;
  }
  return out;
}

std::map<std::string, double> allocate_generation(double demand_mwh, const FuelMixRecord& mix,
                                                  const std::vector<std::string>& fuel_names,
                                                  const std::vector<PlantRecord>& plants) {
  if (!(demand_mwh >= 0.0)) throw Error(ErrorCode::InvalidParams, "demand must be nonnegative");
  if (static_cast<std::size_t>(mix.shares.size()) != fuel_names.size())
    throw Error(ErrorCode::DimensionMismatch, "mix dimension does not match fuel names");

  std::map<std::string, double> allocation;
  for (const auto& p : plants) allocation.emplace(p.plant_id, 0.0);

  for (std::size_t f = 0; f < fuel_names.size(); ++f) {
    const double share = mix.shares[static_cast<Eigen::Index>(f)];
    if (share <= 0.0) continue;
    double basis_total = 0.0;
    for (const auto& p : plants)
      if (p.fuel == fuel_names[f]) basis_total += p.capacity_share_basis;
    if (!(basis_total > 0.0))
      throw Error(ErrorCode::NoPlantForFuel, "fuel '" + fuel_names[f] + "' has positive share but no plant with capacity");
    const double energy = demand_mwh * share;
    for (const auto& p : plants)
      if (p.fuel == fuel_names[f]) allocation[p.plant_id] += energy * (p.capacity_share_basis / basis_total);
  }
  return allocation;
}

std::string format_fuel_mix(const FuelMixSeries& series) {
  std::ostringstream out;
  out << "timestamp";
  for (const auto& name : series.fuel_names) out << ',' << name;
  out << '\n';
  for (const auto& rec : series.records) {
    out << rec.timestamp;
    for (std::size_t f = 0; f < series.fuels(); ++f) {
      out << ',';
      if (rec.flags[f] != CellFlag::Missing) out << csv::format_double(rec.shares[static_cast<Eigen::Index>(f)]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace hp
