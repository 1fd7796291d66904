#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "healthpredictor/dispersion.hpp"
#include "healthpredictor/emissions.hpp"
#include "healthpredictor/ingest.hpp"

namespace hp {

struct ReceptorProfile {
  std::string receptor_id;
  double population = 0.0;
  bool internal = false;                        // inside the source balancing authority
  std::map<std::string, double> baseline_rates;  // cases per person per signal interval (hour), by endpoint
};

enum class ResponseForm { LogLinear, Linear };

struct ConcentrationResponse {
  std::string endpoint_id;
  Eigen::VectorXd alpha;  // per pollutant, (µg/m³)^-1
  ResponseForm form = ResponseForm::LogLinear;
};

struct HealthValuation {
  std::string endpoint_id;
  double dollars_per_case = 0.0;
};

struct HealthSignal {
  std::int64_t timestamp = 0;
  double internal_cost = 0.0;  // $/MWh
  double external_cost = 0.0;  // $/MWh

  double total() const { return internal_cost + external_cost; }
};

// Y0 * POP * (1 - exp(-exposure)), evaluated without cancellation for small
// exposures.
template <typename Scalar>
Scalar log_linear_cases(Scalar baseline_rate, Scalar population, Scalar exposure) {
  using std::expm1;
  return baseline_rate * population * -expm1(-exposure);
}

template <typename Scalar>
Scalar linear_cases(Scalar baseline_rate, Scalar population, Scalar exposure) {
  return baseline_rate * population * exposure;
}

double delta_health(const ReceptorProfile& profile, const ConcentrationResponse& cr, const Eigen::VectorXd& delta_conc);

double monetize(const std::map<std::string, double>& cases_by_endpoint, const std::vector<HealthValuation>& valuations);

struct CostSplit {
  double internal = 0.0;
  double external = 0.0;

  double total() const { return internal + external; }
};

CostSplit split_internal_external(const std::map<std::string, double>& costs, const std::vector<ReceptorProfile>& profiles);

// Everything needed to turn one MWh of a given mix into a HealthSignal. The
// emission table rows must follow the fuel order of the mixes it is applied
// to (see aligned_to); pollutant order is shared by table, matrix and alphas.
struct PipelineConfig {
  EmissionFactorTable emission_factors;
  SourceReceptorMatrix matrix;
  std::vector<ReceptorProfile> receptors;
  std::vector<ConcentrationResponse> responses;
  std::vector<HealthValuation> valuations;

  void validate() const;
  PipelineConfig aligned_to(const std::vector<std::string>& fuel_names) const;
};

HealthSignal impact_per_mwh(const Eigen::VectorXd& shares, const PipelineConfig& config);
// Per-receptor monetized cost for one MWh, keyed by receptor id.
std::map<std::string, double> receptor_costs(const Eigen::VectorXd& shares, const PipelineConfig& config);

std::vector<HealthSignal> label_series(const FuelMixSeries& series, const PipelineConfig& config);

// CSV schemas.
std::vector<ReceptorProfile> parse_receptors(const std::string& text, const std::string& source = "<memory>");
std::string format_receptors(const std::vector<ReceptorProfile>& receptors);

struct ResponseTable {
  std::vector<std::string> pollutant_names;
  std::vector<ConcentrationResponse> responses;
};
ResponseTable parse_responses(const std::string& text, const std::string& source = "<memory>");
std::string format_responses(const std::vector<std::string>& pollutant_names,
                             const std::vector<ConcentrationResponse>& responses);

std::vector<HealthValuation> parse_valuations(const std::string& text, const std::string& source = "<memory>");
std::string format_valuations(const std::vector<HealthValuation>& valuations);

// `timestamp,internal_usd_per_mwh,external_usd_per_mwh`
std::vector<HealthSignal> parse_signals(const std::string& text, const std::string& source = "<memory>");
std::string format_signals(const std::vector<HealthSignal>& signals);

// Loads emission_factors.csv, sr_matrix.csv, receptors.csv,
// concentration_response.csv and valuations.csv from one directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& dir);
// File name -> content for the five files above.
std::map<std::string, std::string> pipeline_config_files(const PipelineConfig& config);
void write_pipeline_config(const PipelineConfig& config, const std::filesystem::path& dir);

}  // namespace hp
