#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "healthpredictor/autodiff.hpp"
#include "healthpredictor/health.hpp"
#include "healthpredictor/ingest.hpp"

namespace hp {

using ParameterSet = std::map<std::string, Eigen::MatrixXd>;
using BoundParameters = std::map<std::string, ad::Var>;

// Leaves for every parameter: tracked variables or constants.
BoundParameters bind_variables(const ParameterSet& params);
BoundParameters bind_constants(const ParameterSet& params);

enum class Architecture { AttentionEncoderDecoder, LinearBaseline };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

struct ModelShape {
  Architecture architecture = Architecture::AttentionEncoderDecoder;
  int fuels = 8;
  int window = 24;  // context length and forecast horizon
  int embed_dim = 64;
  int heads = 4;
  int encoder_layers = 1;
  int decoder_layers = 1;
  int ffn_dim = 128;
  double dropout = 0.1;
  // Attention logits add log(max(history row t, floor)), so an untrained
  // model starts near the same-hour-one-window-ago forecast.
  bool persistence_skip = true;

  void validate() const;
};

struct ForecastModel {
  ModelShape shape;
  ParameterSet params;

  // Attention models get Xavier-uniform weights drawn from the seed; the
  // linear baseline starts as the persistence forecast.
  static ForecastModel create(const ModelShape& shape, std::uint64_t seed);
};

// Inverted dropout; a null pointer means evaluation mode.
struct DropoutSource {
  std::mt19937_64 rng;
  double rate = 0.0;

  ad::Var apply(const ad::Var& x);
};

// history: at least shape.window rows of F shares (the last window rows are
// used). Returns horizon x F rows on the simplex.
ad::Var forward(const ForecastModel& model, const BoundParameters& params, const ad::Var& history, int horizon,
                DropoutSource* dropout = nullptr);
Eigen::MatrixXd forward(const ForecastModel& model, const Eigen::MatrixXd& history, int horizon);

// Three fully connected layers mapping a fuel mix to (internal, external)
// health cost. Outputs pass through softplus; output_scale converts the
// network's normalized units back to $/MWh.
struct HealthConverterNet {
  int fuels = 8;
  int features = 0;
  int hidden = 32;
  double output_scale = 1.0;
  ParameterSet params;

  static HealthConverterNet create(int fuels, std::uint64_t seed, int hidden = 32, int features = 0);
};

// mix: T x F (features, when present, are appended as extra columns).
// Returns T x 2 in normalized units.
ad::Var convert(const HealthConverterNet& net, const BoundParameters& params, const ad::Var& mix);
// T x 2 in $/MWh.
Eigen::MatrixXd convert(const HealthConverterNet& net, const Eigen::MatrixXd& mix);

void validate_beta(double beta);

// beta ||truth - pred||^2 + (1 - beta)/2 (||int error||^2 + ||ext error||^2)
// for one window; impact columns are (internal, external).
ad::Var composite_loss(const ad::Var& pred, const Eigen::MatrixXd& truth, const ad::Var& pred_impact,
                       const Eigen::MatrixXd& truth_impact, double beta);
// Batch form: per-window losses summed over the window, averaged over the batch.
double composite_loss(std::span<const Eigen::MatrixXd> pred, std::span<const Eigen::MatrixXd> truth,
                      std::span<const Eigen::MatrixXd> pred_impact, std::span<const Eigen::MatrixXd> truth_impact,
                      double beta);

// mean |pred - truth| / mean |truth|
double nmae(std::span<const double> pred, std::span<const double> truth);

struct ForecastDataset {
  FuelMixSeries series;               // normalized
  std::vector<HealthSignal> labels;   // one per record, same timestamps

  void validate() const;
};

struct WindowSample {
  std::int64_t target_start = 0;  // timestamp of the first forecast hour
  Eigen::MatrixXd history;        // T x F
  Eigen::MatrixXd target;         // T x F
  Eigen::MatrixXd impact;         // T x 2 ($/MWh)
};

// Non-overlapping windows stepped by T, split 80/20 in time order; the last
// 10% of the training windows are held out for validation.
struct DataSplit {
  std::vector<WindowSample> train;
  std::vector<WindowSample> validation;
  std::vector<WindowSample> test;
};

DataSplit make_splits(const ForecastDataset& dataset, int window);

struct TrainConfig {
  double beta = 0.5;
  int window = 24;
  int epochs = 100;
  double step_size = 0.004;
  int batch_size = 128;
  std::uint64_t seed = 0;
  Architecture architecture = Architecture::AttentionEncoderDecoder;

  void validate() const;
};

struct LossRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ForecastModel model;
  HealthConverterNet converter;
  std::vector<LossRecord> history;  // epoch 0 is the untrained state
};

// Mean composite loss over samples in evaluation mode, with impact targets
// in the converter's normalized units.
double mean_loss(const ForecastModel& model, const HealthConverterNet& converter,
                 const std::vector<WindowSample>& samples, double beta);

// Minibatch SGD on the composite loss. The converter's output_scale is set
// from the training labels before the first update.
TrainResult train(ForecastModel model, HealthConverterNet converter, const DataSplit& split, const TrainConfig& cfg);

// Fresh model and converter for a dataset and config.
ForecastModel initial_model(const ForecastDataset& dataset, const TrainConfig& cfg);
HealthConverterNet initial_converter(const ForecastDataset& dataset, const TrainConfig& cfg);
TrainResult train(const ForecastDataset& dataset, const TrainConfig& cfg);

struct Prediction {
  std::vector<Eigen::MatrixXd> mix;     // per window, T x F
  std::vector<Eigen::MatrixXd> impact;  // per window, T x 2 ($/MWh)
};

Prediction predict(const ForecastModel& model, const HealthConverterNet& converter,
                   const std::vector<WindowSample>& samples);

struct Evaluation {
  double fuel_nmae = 0.0;
  double internal_nmae = 0.0;
  double external_nmae = 0.0;
  double health_nmae = 0.0;  // mean of internal and external
};

Evaluation evaluate(const Prediction& prediction, const std::vector<WindowSample>& samples);
Evaluation evaluate(const ForecastModel& model, const HealthConverterNet& converter,
                    const std::vector<WindowSample>& samples);

struct TradeoffPoint {
  double beta = 0.0;
  double fuel_nmae = 0.0;
  double health_nmae = 0.0;
};

// One independent training run per beta (ascending), all on the same split
// and seed, each scored on the held-out test windows.
std::vector<TradeoffPoint> beta_sweep(const ForecastDataset& dataset, std::vector<double> betas, const TrainConfig& cfg);

// Checkpoint container (JSON): architecture fields, seed, fuel names and
// every named parameter tensor for both networks.
struct Checkpoint {
  ForecastModel model;
  HealthConverterNet converter;
  std::vector<std::string> fuel_names;
  TrainConfig config;
};

std::string format_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text);

std::string format_loss_history(const std::vector<LossRecord>& history);
std::string format_tradeoff(const std::vector<TradeoffPoint>& points);

}  // namespace hp
