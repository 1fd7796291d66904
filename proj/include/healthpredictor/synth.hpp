#pragma once

// Seeded synthetic inputs: an hourly eight-fuel mix with daily and seasonal
// structure, an illustrative health pipeline, and the labels it implies.
// Factor, population and valuation defaults are placeholders chosen to give
// signals of tens of $/MWh, not measured values.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "healthpredictor/health.hpp"
#include "healthpredictor/ingest.hpp"

namespace hp {

struct SynthConfig {
  int hours = 8760;
  std::int64_t start_timestamp = 0;
  std::uint64_t seed = 0;
  double noise = 0.15;             // scale of the AR(1) output and load perturbations
  double missing_fraction = 0.0;   // cells blanked at random in the written mix
  std::optional<std::string> single_fuel;  // every hour is 100% this fuel
  int receptors = 6;
};

struct SynthBundle {
  FuelMixSeries series;         // normalized, complete
  FuelMixSeries raw_series;     // series with missing_fraction cells blanked
  PipelineConfig config;
  std::vector<HealthSignal> labels;
};

EmissionFactorTable default_emission_factors();
PlumeParams default_plume_params(int receptors);
PipelineConfig default_pipeline_config(int receptors = 6);

SynthBundle make_synthetic_bundle(const SynthConfig& cfg);

// fuel_mix.csv (raw_series), category_map.csv, labels.csv and the pipeline
// configuration files, keyed by file name.
std::map<std::string, std::string> bundle_files(const SynthBundle& bundle);
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir);

}  // namespace hp
