#include "healthpredictor/health.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

double delta_health(const ReceptorProfile& profile, const ConcentrationResponse& cr, const Eigen::VectorXd& delta_conc) {
  if (cr.alpha.size() != delta_conc.size())
    throw Error(ErrorCode::DimensionMismatch, "endpoint '" + cr.endpoint_id + "' has " + std::to_string(cr.alpha.size()) +
                                                  " coefficients for " + std::to_string(delta_conc.size()) + " pollutants");
  if ((delta_conc.array() < 0.0).any())
    throw Error(ErrorCode::InvalidParams, "concentration changes must be nonnegative");
  auto it = profile.baseline_rates.find(cr.endpoint_id);
  if (it == profile.baseline_rates.end())
    throw Error(ErrorCode::DimensionMismatch,
                "receptor '" + profile.receptor_id + "' has no baseline rate for '" + cr.endpoint_id + "'");
  const double exposure = cr.alpha.dot(delta_conc);
  return cr.form == ResponseForm::LogLinear ? log_linear_cases(it->second, profile.population, exposure)
                                            : linear_cases(it->second, profile.population, exposure);
}

double monetize(const std::map<std::string, double>& cases_by_endpoint, const std::vector<HealthValuation>& valuations) {
  double total = 0.0;
  for (const auto& [endpoint, cases] : cases_by_endpoint) {
    auto it = std::find_if(valuations.begin(), valuations.end(),
                           [&](const HealthValuation& v) { return v.endpoint_id == endpoint; });
    if (it == valuations.end()) throw Error(ErrorCode::MissingValuation, "no valuation for endpoint '" + endpoint + "'");
    total += cases * it->dollars_per_case;
  }
  return total;
}

CostSplit split_internal_external(const std::map<std::string, double>& costs, const std::vector<ReceptorProfile>& profiles) {
  std::unordered_map<std::string, bool> internal;
  for (const auto& p : profiles) internal.emplace(p.receptor_id, p.internal);
  CostSplit split;
  for (const auto& [id, usd] : costs) {
    auto it = internal.find(id);
    if (it == internal.end()) throw Error(ErrorCode::UnknownReceptor, "no profile for receptor '" + id + "'");
    (it->second ? split.internal : split.external) += usd;
  }
  return split;
}

void PipelineConfig::validate() const {
  emission_factors.validate();
  matrix.validate();
  if (emission_factors.pollutant_names != matrix.pollutant_names)
    throw Error(ErrorCode::DimensionMismatch, "emission table and source-receptor matrix list different pollutants");
  std::set<std::string> profiled;
  for (const auto& p : receptors) {
    if (!(p.population >= 0.0)) throw Error(ErrorCode::InvalidConfig, "receptor '" + p.receptor_id + "' has negative population");
    for (const auto& [endpoint, rate] : p.baseline_rates)
      if (!(rate >= 0.0)) throw Error(ErrorCode::InvalidConfig, "negative baseline rate for '" + endpoint + "'");
    profiled.insert(p.receptor_id);
  }
  for (const auto& id : matrix.receptor_ids)
    if (!profiled.count(id)) throw Error(ErrorCode::UnknownReceptor, "no profile for receptor '" + id + "'");
  for (const auto& cr : responses) {
    if (cr.alpha.size() != matrix.pollutants())
      throw Error(ErrorCode::DimensionMismatch, "endpoint '" + cr.endpoint_id + "' has the wrong number of coefficients");
    if ((cr.alpha.array() < 0.0).any())
      throw Error(ErrorCode::InvalidConfig, "endpoint '" + cr.endpoint_id + "' has a negative coefficient");
    if (std::none_of(valuations.begin(), valuations.end(),
                     [&](const HealthValuation& v) { return v.endpoint_id == cr.endpoint_id; }))
      throw Error(ErrorCode::MissingValuation, "no valuation for endpoint '" + cr.endpoint_id + "'");
  }
  for (const auto& v : valuations)
    if (!(v.dollars_per_case >= 0.0)) throw Error(ErrorCode::InvalidConfig, "negative valuation for '" + v.endpoint_id + "'");
}

PipelineConfig PipelineConfig::aligned_to(const std::vector<std::string>& fuel_names) const {
  PipelineConfig out = *this;
  out.emission_factors = emission_factors.aligned_to(fuel_names);
  return out;
}

std::map<std::string, double> receptor_costs(const Eigen::VectorXd& shares, const PipelineConfig& config) {
  const EmissionVector emitted = emissions_from_mix(shares, config.emission_factors, 1.0);
  const ReceptorConcentrations conc = apply_source_receptor(emitted, config.matrix);

  std::unordered_map<std::string, const ReceptorProfile*> profile_of;
  for (const auto& p : config.receptors) profile_of.emplace(p.receptor_id, &p);

  std::map<std::string, double> costs;
  for (Eigen::Index i = 0; i < config.matrix.receptors(); ++i) {
    const std::string& id = config.matrix.receptor_ids[static_cast<std::size_t>(i)];
    auto it = profile_of.find(id);
    if (it == profile_of.end()) throw Error(ErrorCode::UnknownReceptor, "no profile for receptor '" + id + "'");
    std::map<std::string, double> cases;
    const Eigen::VectorXd delta = conc.delta.row(i).transpose();
    for (const auto& cr : config.responses) cases[cr.endpoint_id] += delta_health(*it->second, cr, delta);
    costs[id] += monetize(cases, config.valuations);
  }
  return costs;
}

HealthSignal impact_per_mwh(const Eigen::VectorXd& shares, const PipelineConfig& config) {
  const CostSplit split = split_internal_external(receptor_costs(shares, config), config.receptors);
  return {0, split.internal, split.external};
}

std::vector<HealthSignal> label_series(const FuelMixSeries& series, const PipelineConfig& config) {
  const PipelineConfig aligned = config.aligned_to(series.fuel_names);
  std::vector<HealthSignal> out;
  out.reserve(series.size());
  for (const auto& rec : series.records) {
    if (rec.has_missing()) throw Error(ErrorCode::UnimputableSeries, "cannot label a record with missing cells");
    HealthSignal s = impact_per_mwh(rec.shares, aligned);
    s.timestamp = rec.timestamp;
    out.push_back(s);
  }
  return out;
}

std::vector<ReceptorProfile> parse_receptors(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header.size() < 3 || table.header[0] != "receptor_id" || table.header[1] != "population" ||
      table.header[2] != "internal")
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'receptor_id,population,internal,<endpoint...>'");
  std::vector<ReceptorProfile> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    ReceptorProfile p;
    p.receptor_id = row[0];
    p.population = csv::parse_double(row[1], ctx);
    p.internal = csv::parse_bool(row[2], ctx);
    for (std::size_t c = 3; c < row.size(); ++c) p.baseline_rates[table.header[c]] = csv::parse_double(row[c], ctx);
    out.push_back(std::move(p));
  }
  return out;
}

std::string format_receptors(const std::vector<ReceptorProfile>& receptors) {
  std::vector<std::string> endpoints;
  for (const auto& p : receptors)
    for (const auto& [e, _] : p.baseline_rates)
      if (std::find(endpoints.begin(), endpoints.end(), e) == endpoints.end()) endpoints.push_back(e);
  std::ostringstream out;
  out << "receptor_id,population,internal";
  for (const auto& e : endpoints) out << ',' << e;
  out << '\n';
  for (const auto& p : receptors) {
    out << p.receptor_id << ',' << csv::format_double(p.population) << ',' << (p.internal ? 1 : 0);
    for (const auto& e : endpoints) {
      auto it = p.baseline_rates.find(e);
      out << ',' << csv::format_double(it == p.baseline_rates.end() ? 0.0 : it->second);
    }
    out << '\n';
  }
  return out.str();
}

ResponseTable parse_responses(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header.size() < 3 || table.header[0] != "endpoint_id" || table.header[1] != "form")
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'endpoint_id,form,<alpha...>'");
  ResponseTable out;
  out.pollutant_names.assign(table.header.begin() + 2, table.header.end());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    ConcentrationResponse cr;
    cr.endpoint_id = row[0];
    if (row[1] == "log_linear")
      cr.form = ResponseForm::LogLinear;
    else if (row[1] == "linear")
      cr.form = ResponseForm::Linear;
    else
      throw Error(ErrorCode::MalformedRow, ctx + ": form must be 'log_linear' or 'linear'");
    cr.alpha.resize(static_cast<Eigen::Index>(out.pollutant_names.size()));
    for (std::size_t k = 0; k < out.pollutant_names.size(); ++k)
      cr.alpha[static_cast<Eigen::Index>(k)] = csv::parse_double(row[k + 2], ctx);
    out.responses.push_back(std::move(cr));
  }
  return out;
}

std::string format_responses(const std::vector<std::string>& pollutant_names,
                             const std::vector<ConcentrationResponse>& responses) {
  std::ostringstream out;
  out << "endpoint_id,form";
  for (const auto& p : pollutant_names) out << ',' << p;
  out << '\n';
  for (const auto& cr : responses) {
    out << cr.endpoint_id << ',' << (cr.form == ResponseForm::LogLinear ? "log_linear" : "linear");
    for (Eigen::Index k = 0; k < cr.alpha.size(); ++k) out << ',' << csv::format_double(cr.alpha[k]);
    out << '\n';
  }
  return out.str();
}

std::vector<HealthValuation> parse_valuations(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header != std::vector<std::string>{"endpoint_id", "dollars_per_case"})
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'endpoint_id,dollars_per_case'");
  std::vector<HealthValuation> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    out.push_back({table.rows[r][0], csv::parse_double(table.rows[r][1], source + ":" + std::to_string(table.lines[r]))});
  return out;
}

std::string format_valuations(const std::vector<HealthValuation>& valuations) {
  std::ostringstream out;
  out << "endpoint_id,dollars_per_case\n";
  for (const auto& v : valuations) out << v.endpoint_id << ',' << csv::format_double(v.dollars_per_case) << '\n';
  return out.str();
}

std::vector<HealthSignal> parse_signals(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header != std::vector<std::string>{"timestamp", "internal_usd_per_mwh", "external_usd_per_mwh"})
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'timestamp,internal_usd_per_mwh,external_usd_per_mwh'");
  std::vector<HealthSignal> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    HealthSignal s{parse_timestamp(row[0], ctx), csv::parse_double(row[1], ctx), csv::parse_double(row[2], ctx)};
    if (!(s.internal_cost >= 0.0) || !(s.external_cost >= 0.0))
      throw Error(ErrorCode::MalformedRow, ctx + ": health costs must be nonnegative");
    if (!out.empty() && s.timestamp != out.back().timestamp + 1)
      throw Error(ErrorCode::NonMonotonicTimestamp, ctx + ": signal timestamps must advance by one hour");
    out.push_back(s);
  }
  return out;
}

std::string format_signals(const std::vector<HealthSignal>& signals) {
  std::ostringstream out;
  out << "timestamp,internal_usd_per_mwh,external_usd_per_mwh\n";
  for (const auto& s : signals)
    out << s.timestamp << ',' << csv::format_double(s.internal_cost) << ',' << csv::format_double(s.external_cost) << '\n';
  return out.str();
}

PipelineConfig load_pipeline_config(const std::filesystem::path& dir) {
  PipelineConfig config;
  config.emission_factors = EmissionFactorTable::load(dir / "emission_factors.csv");
  config.matrix = SourceReceptorMatrix::load(dir / "sr_matrix.csv");
  config.receptors = parse_receptors(csv::read_file(dir / "receptors.csv"), (dir / "receptors.csv").string());
  auto responses = parse_responses(csv::read_file(dir / "concentration_response.csv"),
                                   (dir / "concentration_response.csv").string());
  if (responses.pollutant_names != config.matrix.pollutant_names)
    throw Error(ErrorCode::DimensionMismatch, "concentration-response columns do not match the matrix pollutants");
  config.responses = std::move(responses.responses);
  config.valuations = parse_valuations(csv::read_file(dir / "valuations.csv"), (dir / "valuations.csv").string());
  config.validate();
  return config;
}

std::map<std::string, std::string> pipeline_config_files(const PipelineConfig& config) {
  return {{"emission_factors.csv", config.emission_factors.format()},
          {"sr_matrix.csv", config.matrix.format()},
          {"receptors.csv", format_receptors(config.receptors)},
          {"concentration_response.csv", format_responses(config.matrix.pollutant_names, config.responses)},
          {"valuations.csv", format_valuations(config.valuations)}};
}

void write_pipeline_config(const PipelineConfig& config, const std::filesystem::path& dir) {
  for (const auto& [name, content] : pipeline_config_files(config)) csv::write_file(dir / name, content);
}

}  // namespace hp
