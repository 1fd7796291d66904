#include "healthpredictor/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

namespace {

double bump(int hour, double center, double width) {
  double d = std::abs(static_cast<double>(hour) - center);
  d = std::min(d, 24.0 - d);
  return std::exp(-0.5 * d * d / (width * width));
}

// Hourly output per fuel in units of mean load. Nuclear, hydro, wind and
// solar are taken as given; coal, oil and gas cover the remaining net load in
// merit order (coal first, oil only near the peak, gas the rest). shock holds
// one standard-normal AR(1) state per fuel plus one for the load.
Eigen::VectorXd dispatch(std::int64_t timestamp, const Eigen::VectorXd& shock, double noise) {
  const int hour = static_cast<int>(((timestamp % 24) + 24) % 24);
  const double day = std::floor(static_cast<double>(timestamp) / 24.0);
  const double winter = std::cos(2.0 * std::numbers::pi * day / 365.0);
  const double daylight = std::max(0.0, std::sin(std::numbers::pi * (hour - 6) / 12.0));
  const double load = (1.0 + 0.08 * winter) *
                      (0.85 + 0.35 * bump(hour, 19, 3.5) + 0.10 * bump(hour, 8, 2) - 0.10 * bump(hour, 3, 3)) *
                      std::exp(0.5 * noise * shock[8]);
  auto vary = [&](Eigen::Index f, double scale) { return std::exp(scale * noise * shock[f]); };
  Eigen::VectorXd mw = Eigen::VectorXd::Zero(8);
  mw[3] = 0.18;                                                  // NUC
  mw[4] = (0.05 + 0.06 * bump(hour, 19, 3)) * vary(4, 1.0);      // WAT
  mw[5] = 0.12 * (1.0 + 0.8 * bump(hour, 2, 4)) * vary(5, 3.0);  // WND
  mw[6] = 0.32 * daylight * (1.0 - 0.3 * winter) * vary(6, 1.5); // SUN
  mw[7] = 0.02;                                                  // OTH
  const double net = std::max(0.0, load - mw.sum());
  mw[0] = (0.08 + 0.5 * std::max(0.0, net - 0.25)) * vary(0, 1.0);  // COL
  mw[2] = 0.25 * std::max(0.0, net - 0.75) * vary(2, 1.0);          // OIL
  mw[1] = std::max(0.02, load - mw.sum());                          // NG
  return mw;
}

}  // namespace

EmissionFactorTable default_emission_factors() {
  EmissionFactorTable t;
  for (auto f : kCanonicalFuels) t.fuel_names.emplace_back(f);
  for (auto p : kCanonicalPollutants) t.pollutant_names.emplace_back(p);
  t.factors = Eigen::MatrixXd::Zero(8, 4);
  // kg/MWh: PM2.5, SO2, NOX, VOC
  t.factors.row(0) << 0.20, 1.00, 0.80, 0.010;
  t.factors.row(1) << 0.01, 0.003, 0.20, 0.005;
  t.factors.row(2) << 0.10, 1.00, 1.00, 0.020;
  t.factors.row(7) << 0.10, 0.30, 0.50, 0.050;
  return t;
}

PlumeParams default_plume_params(int receptors) {
  if (receptors < 1) throw Error(ErrorCode::InvalidParams, "need at least one receptor");
  PlumeParams p;
  for (int i = 0; i < receptors; ++i) {
    const double x = 3000.0 + 4000.0 * i;
    const double y = (i % 3 == 0 ? 0.0 : (i % 3 == 1 ? 150.0 : -400.0));
    p.receptor_offsets.emplace_back(x, y);
  }
  return p;
}

PipelineConfig default_pipeline_config(int receptors) {
  PipelineConfig c;
  c.emission_factors = default_emission_factors();
  c.matrix = build_plume_matrix(default_plume_params(receptors), receptors, 4);
  for (int i = 0; i < receptors; ++i) {
    ReceptorProfile r;
    r.receptor_id = c.matrix.receptor_ids[static_cast<std::size_t>(i)];
    r.population = 150000.0 + 50000.0 * ((i * 7) % 5);
    r.internal = i % 2 == 0;
    // Cases per person-hour.
    r.baseline_rates["mortality"] = 8e-3 / 8760.0;
    r.baseline_rates["respiratory_er"] = 4e-3 / 8760.0;
    c.receptors.push_back(std::move(r));
  }
  ConcentrationResponse mortality{"mortality", Eigen::VectorXd(4), ResponseForm::LogLinear};
  mortality.alpha << 0.0058, 0.0006, 0.0004, 0.0001;
  ConcentrationResponse er{"respiratory_er", Eigen::VectorXd(4), ResponseForm::Linear};
  er.alpha << 0.0030, 0.0010, 0.0008, 0.0002;
  c.responses = {mortality, er};
  c.valuations = {{"mortality", 1.0e5}, {"respiratory_er", 1.5e3}};
  c.validate();
  return c;
}

SynthBundle make_synthetic_bundle(const SynthConfig& cfg) {
  if (cfg.hours < 1) throw Error(ErrorCode::InvalidParams, "hours must be positive");
  if (!(cfg.noise >= 0.0)) throw Error(ErrorCode::InvalidParams, "noise must be nonnegative");
  if (!(cfg.missing_fraction >= 0.0 && cfg.missing_fraction < 1.0))
    throw Error(ErrorCode::InvalidParams, "missing_fraction must lie in [0, 1)");
  std::optional<Eigen::Index> only;
  if (cfg.single_fuel) {
    if (!is_canonical_fuel(*cfg.single_fuel))
      throw Error(ErrorCode::InvalidParams, "unknown fuel '" + *cfg.single_fuel + "'");
    only = static_cast<Eigen::Index>(canonical_rank(*cfg.single_fuel));
  }

  SynthBundle b;
  for (auto f : kCanonicalFuels) b.series.fuel_names.emplace_back(f);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phi = 0.9;
  Eigen::VectorXd ar = Eigen::VectorXd::Zero(9);

  for (int t = 0; t < cfg.hours; ++t) {
    FuelMixRecord rec;
    rec.timestamp = cfg.start_timestamp + t;
    rec.flags.assign(8, CellFlag::Observed);
    if (only) {
      rec.shares = Eigen::VectorXd::Zero(8);
      rec.shares[*only] = 1.0;
    } else {
      for (Eigen::Index f = 0; f < ar.size(); ++f) ar[f] = phi * ar[f] + std::sqrt(1.0 - phi * phi) * gauss(rng);
      rec.shares = dispatch(rec.timestamp, ar, cfg.noise);
      rec.shares /= rec.shares.sum();
    }
    b.series.records.push_back(std::move(rec));
  }

  b.raw_series = b.series;
  if (cfg.missing_fraction > 0.0) {
    for (auto& rec : b.raw_series.records) {
      for (Eigen::Index f = 0; f < 8; ++f) {
        if (unit(rng) < cfg.missing_fraction) {
          rec.shares[f] = std::numeric_limits<double>::quiet_NaN();
          rec.flags[static_cast<std::size_t>(f)] = CellFlag::Missing;
        }
      }
    }
  }

  b.config = default_pipeline_config(cfg.receptors);
  b.labels = label_series(b.series, b.config);
  return b;
}

std::map<std::string, std::string> bundle_files(const SynthBundle& bundle) {
  auto files = pipeline_config_files(bundle.config);
  files["fuel_mix.csv"] = format_fuel_mix(bundle.raw_series);
  std::ostringstream map;
  map << "raw_label,canonical\n";
  for (const auto& name : bundle.raw_series.fuel_names) map << name << ',' << name << '\n';
  files["category_map.csv"] = map.str();
  files["labels.csv"] = format_signals(bundle.labels);
  return files;
}

void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir) {
  for (const auto& [name, content] : bundle_files(bundle)) csv::write_file(dir / name, content);
}

}  // namespace hp
