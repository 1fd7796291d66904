#include "healthpredictor/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

namespace {

using ad::Var;
using Matrix = Eigen::MatrixXd;

constexpr double kLogFloor = 1e-12;
constexpr double kSkipFloor = 1e-4;

Matrix xavier(std::mt19937_64& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  return m;
}

void add_linear(ParameterSet& p, std::mt19937_64& rng, const std::string& name, Eigen::Index in, Eigen::Index out) {
  p[name + ".W"] = xavier(rng, in, out);
  p[name + ".b"] = Matrix::Zero(1, out);
}

void add_norm(ParameterSet& p, const std::string& name, Eigen::Index dim) {
  p[name + ".g"] = Matrix::Ones(1, dim);
  p[name + ".b"] = Matrix::Zero(1, dim);
}

void add_attention(ParameterSet& p, std::mt19937_64& rng, const std::string& name, Eigen::Index dim) {
  for (const char* proj : {".q", ".k", ".v", ".o"}) add_linear(p, rng, name + proj, dim, dim);
}

const Var& param(const BoundParameters& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error(ErrorCode::ShapeMismatch, "missing parameter '" + name + "'");
  return it->second;
}

Var linear(const BoundParameters& p, const std::string& name, const Var& x) {
  return ad::add_row(ad::matmul(x, param(p, name + ".W")), param(p, name + ".b"));
}

Var norm(const BoundParameters& p, const std::string& name, const Var& x) {
  return ad::layer_norm_rows(x, param(p, name + ".g"), param(p, name + ".b"));
}

Var attention(const BoundParameters& p, const std::string& name, const Var& query, const Var& memory, int heads) {
  const Var q = linear(p, name + ".q", query);
  const Var k = linear(p, name + ".k", memory);
  const Var v = linear(p, name + ".v", memory);
  const Eigen::Index head_dim = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outputs;
  for (int h = 0; h < heads; ++h) {
    const Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    const Var weights = ad::softmax_rows(scale * ad::matmul(qh, ad::transpose(kh)));
    outputs.push_back(ad::matmul(weights, vh));
  }
  return linear(p, name + ".o", ad::concat_cols(outputs));
}

Var feed_forward(const BoundParameters& p, const std::string& name, const Var& x) {
  return linear(p, name + ".ff2", ad::gelu(linear(p, name + ".ff1", x)));
}

Var maybe_drop(DropoutSource* dropout, const Var& x) { return dropout ? dropout->apply(x) : x; }

Matrix positional_encoding(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

Var attention_forward(const ForecastModel& model, const BoundParameters& p, const Var& x, int horizon,
                      DropoutSource* dropout) {
  const ModelShape& s = model.shape;
  const Var embedded = linear(p, "embed", x) + ad::constant(positional_encoding(x.rows(), s.embed_dim));

  Var memory = embedded;
  for (int l = 0; l < s.encoder_layers; ++l) {
    const std::string n = "enc" + std::to_string(l);
    memory = norm(p, n + ".ln1", memory + maybe_drop(dropout, attention(p, n + ".self", memory, memory, s.heads)));
    memory = norm(p, n + ".ln2", memory + maybe_drop(dropout, feed_forward(p, n, memory)));
  }

  // Decoder queries: learned per-step embeddings, positions, and the most
  // recent observation.
  const Var last = ad::slice_rows(embedded, x.rows() - 1, 1);
  Var y = ad::add_row(ad::slice_rows(param(p, "query"), 0, horizon) +
                          ad::constant(positional_encoding(horizon, s.embed_dim)),
                      last);
  for (int l = 0; l < s.decoder_layers; ++l) {
    const std::string n = "dec" + std::to_string(l);
    y = norm(p, n + ".ln1", y + maybe_drop(dropout, attention(p, n + ".self", y, y, s.heads)));
    y = norm(p, n + ".ln2", y + maybe_drop(dropout, attention(p, n + ".cross", y, memory, s.heads)));
    y = norm(p, n + ".ln3", y + maybe_drop(dropout, feed_forward(p, n, y)));
  }
  Var logits = linear(p, "out", y);
  if (s.persistence_skip) logits = logits + ad::log_clamped(ad::slice_rows(x, 0, horizon), kSkipFloor);
  return ad::softmax_rows(logits);
}

Var linear_forward(const ForecastModel& model, const BoundParameters& p, const Var& x, int horizon) {
  const int f = model.shape.fuels, t = model.shape.window;
  const Var features = ad::reshape(ad::log_clamped(x, kLogFloor), 1, static_cast<Eigen::Index>(t) * f);
  const Var logits = ad::reshape(linear(p, "linear", features), t, f);
  return ad::softmax_rows(ad::slice_rows(logits, 0, horizon));
}

Matrix to_matrix(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& values = j.at("values");
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw Error(ErrorCode::MalformedRow, "checkpoint tensor has the wrong number of values");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

nlohmann::json params_to_json(const ParameterSet& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, m] : params) out[name] = to_json(m);
  return out;
}

ParameterSet params_from_json(const nlohmann::json& j) {
  ParameterSet out;
  for (const auto& [name, m] : j.items()) out[name] = to_matrix(m);
  return out;
}

void check_finite(const ParameterSet& params) {
  for (const auto& [name, m] : params)
    if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, "parameter '" + name + "' is not finite");
}

}  // namespace

BoundParameters bind_variables(const ParameterSet& params) {
  BoundParameters out;
  for (const auto& [name, m] : params) out.emplace(name, ad::variable(m));
  return out;
}

BoundParameters bind_constants(const ParameterSet& params) {
  BoundParameters out;
  for (const auto& [name, m] : params) out.emplace(name, ad::constant(m));
  return out;
}

std::string_view to_string(Architecture a) {
  return a == Architecture::AttentionEncoderDecoder ? "attention_encoder_decoder" : "linear_baseline";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "attention_encoder_decoder" || name == "attention") return Architecture::AttentionEncoderDecoder;
  if (name == "linear_baseline" || name == "linear") return Architecture::LinearBaseline;
  throw Error(ErrorCode::InvalidConfig, "unknown architecture '" + std::string(name) + "'");
}

void ModelShape::validate() const {
  if (fuels < 1 || window < 1) throw Error(ErrorCode::InvalidParams, "model needs at least one fuel and a window >= 1");
  if (architecture == Architecture::AttentionEncoderDecoder) {
    if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
      throw Error(ErrorCode::InvalidParams, "embed_dim must be a positive multiple of heads");
    if (encoder_layers < 0 || decoder_layers < 0 || ffn_dim < 1)
      throw Error(ErrorCode::InvalidParams, "bad layer counts");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidParams, "dropout must lie in [0, 1)");
  }
}

ForecastModel ForecastModel::create(const ModelShape& shape, std::uint64_t seed) {
  shape.validate();
  ForecastModel model{shape, {}};
  ParameterSet& p = model.params;
  if (shape.architecture == Architecture::LinearBaseline) {
    const Eigen::Index n = static_cast<Eigen::Index>(shape.window) * shape.fuels;
    Matrix w = Matrix::Zero(n, n);
    const Eigen::Index last = static_cast<Eigen::Index>(shape.window - 1) * shape.fuels;
    for (int t = 0; t < shape.window; ++t)
      for (int f = 0; f < shape.fuels; ++f) w(last + f, static_cast<Eigen::Index>(t) * shape.fuels + f) = 1.0;
    p["linear.W"] = std::move(w);
    p["linear.b"] = Matrix::Zero(1, n);
    return model;
  }

  std::mt19937_64 rng(seed);
  const Eigen::Index d = shape.embed_dim;
  add_linear(p, rng, "embed", shape.fuels, d);
  for (int l = 0; l < shape.encoder_layers; ++l) {
    const std::string n = "enc" + std::to_string(l);
    add_attention(p, rng, n + ".self", d);
    add_linear(p, rng, n + ".ff1", d, shape.ffn_dim);
    add_linear(p, rng, n + ".ff2", shape.ffn_dim, d);
    add_norm(p, n + ".ln1", d);
    add_norm(p, n + ".ln2", d);
  }
  std::normal_distribution<double> small(0.0, 0.02);
  Matrix query(shape.window, d);
  for (Eigen::Index i = 0; i < query.size(); ++i) query(i) = small(rng);
  p["query"] = std::move(query);
  for (int l = 0; l < shape.decoder_layers; ++l) {
    const std::string n = "dec" + std::to_string(l);
    add_attention(p, rng, n + ".self", d);
    add_attention(p, rng, n + ".cross", d);
    add_linear(p, rng, n + ".ff1", d, shape.ffn_dim);
    add_linear(p, rng, n + ".ff2", shape.ffn_dim, d);
    add_norm(p, n + ".ln1", d);
    add_norm(p, n + ".ln2", d);
    add_norm(p, n + ".ln3", d);
  }
  add_linear(p, rng, "out", d, shape.fuels);
  if (shape.persistence_skip) p["out.W"].setZero();
  return model;
}

Var DropoutSource::apply(const Var& x) {
  if (rate <= 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = u(rng) < rate ? 0.0 : keep;
  return ad::cwise_mul(x, ad::constant(std::move(mask)));
}

Var forward(const ForecastModel& model, const BoundParameters& params, const Var& history, int horizon,
            DropoutSource* dropout) {
  const ModelShape& s = model.shape;
  if (history.cols() != s.fuels)
    throw Error(ErrorCode::ShapeMismatch, "history has " + std::to_string(history.cols()) + " fuels, model expects " +
                                              std::to_string(s.fuels));
  if (history.rows() < s.window)
    throw Error(ErrorCode::ShortHistory, "history has " + std::to_string(history.rows()) + " hours, model needs " +
                                             std::to_string(s.window));
  if (horizon < 1 || horizon > s.window)
    throw Error(ErrorCode::ShapeMismatch, "horizon must lie in [1, " + std::to_string(s.window) + "]");
  const Var x = history.rows() == s.window ? history : ad::slice_rows(history, history.rows() - s.window, s.window);
  return s.architecture == Architecture::LinearBaseline ? linear_forward(model, params, x, horizon)
                                                         : attention_forward(model, params, x, horizon, dropout);
}

Matrix forward(const ForecastModel& model, const Matrix& history, int horizon) {
  return forward(model, bind_constants(model.params), ad::constant(history), horizon).value();
}

HealthConverterNet HealthConverterNet::create(int fuels, std::uint64_t seed, int hidden, int features) {
  if (fuels < 1 || hidden < 1 || features < 0) throw Error(ErrorCode::InvalidParams, "bad converter dimensions");
  HealthConverterNet net;
  net.fuels = fuels;
  net.features = features;
  net.hidden = hidden;
  std::mt19937_64 rng(seed);
  add_linear(net.params, rng, "fc1", fuels + features, hidden);
  add_linear(net.params, rng, "fc2", hidden, hidden);
  add_linear(net.params, rng, "fc3", hidden, 2);
  // Outputs start at one normalized unit, the mean training label.
  net.params["fc3.b"].setConstant(ad::inverse_softplus(1.0));
  return net;
}

Var convert(const HealthConverterNet& net, const BoundParameters& params, const Var& mix) {
  if (mix.cols() != net.fuels + net.features)
    throw Error(ErrorCode::ShapeMismatch, "converter expects " + std::to_string(net.fuels + net.features) + " inputs");
  const Var h1 = ad::tanh(linear(params, "fc1", static_cast<double>(net.fuels) * mix));
  const Var h2 = ad::tanh(linear(params, "fc2", h1));
  return ad::softplus(linear(params, "fc3", h2));
}

Matrix convert(const HealthConverterNet& net, const Matrix& mix) {
  return net.output_scale * convert(net, bind_constants(net.params), ad::constant(mix)).value();
}

void validate_beta(double beta) {
  if (!(beta > 0.0 && beta <= 0.998))
    throw Error(ErrorCode::BetaOutOfRange, "beta must lie in (0, 0.998], got " + csv::format_double(beta));
}

Var composite_loss(const Var& pred, const Matrix& truth, const Var& pred_impact, const Matrix& truth_impact,
                   double beta) {
  validate_beta(beta);
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw Error(ErrorCode::ShapeMismatch, "predicted and true mixes differ in shape");
  if (pred_impact.cols() != 2 || truth_impact.cols() != 2 || pred_impact.rows() != truth_impact.rows() ||
      pred_impact.rows() != pred.rows())
    throw Error(ErrorCode::ShapeMismatch, "impact matrices must be T x 2 and match the mix horizon");
  const Var fuel = ad::squared_norm(ad::constant(truth) - pred);
  const Var internal = ad::squared_norm(ad::constant(truth_impact.col(0)) - ad::slice_cols(pred_impact, 0, 1));
  const Var external = ad::squared_norm(ad::constant(truth_impact.col(1)) - ad::slice_cols(pred_impact, 1, 1));
  return beta * fuel + ((1.0 - beta) / 2.0) * (internal + external);
}

double composite_loss(std::span<const Matrix> pred, std::span<const Matrix> truth, std::span<const Matrix> pred_impact,
                      std::span<const Matrix> truth_impact, double beta) {
  if (pred.size() != truth.size() || pred.size() != pred_impact.size() || pred.size() != truth_impact.size() ||
      pred.empty())
    throw Error(ErrorCode::ShapeMismatch, "batch components differ in length or are empty");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    total += composite_loss(ad::constant(pred[i]), truth[i], ad::constant(pred_impact[i]), truth_impact[i], beta).scalar();
  return total / static_cast<double>(pred.size());
}

double nmae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw Error(ErrorCode::ShapeMismatch, "nmae needs equal, nonzero lengths");
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err += std::abs(pred[i] - truth[i]);
    scale += std::abs(truth[i]);
  }
  if (!(scale > 0.0)) throw Error(ErrorCode::ZeroNormalizer, "mean absolute truth is zero");
  return err / scale;
}

void ForecastDataset::validate() const {
  series.validate();
  if (labels.size() != series.size())
    throw Error(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(series.size()) + " records but " +
                                                  std::to_string(labels.size()) + " labels");
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t].timestamp != series.records[t].timestamp)
      throw Error(ErrorCode::DimensionMismatch, "label timestamp " + std::to_string(labels[t].timestamp) +
                                                    " does not match record " + std::to_string(series.records[t].timestamp));
    if (series.records[t].has_missing())
      throw Error(ErrorCode::UnimputableSeries, "dataset records must be imputed before training");
  }
}

DataSplit make_splits(const ForecastDataset& dataset, int window) {
  dataset.validate();
  if (window < 1) throw Error(ErrorCode::InvalidParams, "window must be positive");
  const auto n = static_cast<Eigen::Index>(dataset.series.size());
  if (n < 2 * static_cast<Eigen::Index>(window))
    throw Error(ErrorCode::InsufficientData, "need at least " + std::to_string(2 * window) + " hours, have " +
                                                 std::to_string(n));
  const Matrix shares = dataset.series.shares();
  Matrix impact(n, 2);
  for (Eigen::Index t = 0; t < n; ++t) {
    impact(t, 0) = dataset.labels[static_cast<std::size_t>(t)].internal_cost;
    impact(t, 1) = dataset.labels[static_cast<std::size_t>(t)].external_cost;
  }

  std::vector<WindowSample> all;
  for (Eigen::Index start = 0; start + 2 * window <= n; start += window) {
    WindowSample s;
    s.target_start = dataset.series.records[static_cast<std::size_t>(start + window)].timestamp;
    s.history = shares.middleRows(start, window);
    s.target = shares.middleRows(start + window, window);
    s.impact = impact.middleRows(start + window, window);
    all.push_back(std::move(s));
  }

  const std::size_t count = all.size();
  const std::size_t train_total = std::max<std::size_t>(1, (count * 8) / 10);
  const std::size_t validation = train_total >= 2 ? std::max<std::size_t>(1, train_total / 10) : 0;
  DataSplit split;
  split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_total - validation));
  split.validation.assign(all.begin() + static_cast<std::ptrdiff_t>(train_total - validation),
                          all.begin() + static_cast<std::ptrdiff_t>(train_total));
  split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(train_total), all.end());
  return split;
}

void TrainConfig::validate() const {
  validate_beta(beta);
  if (window < 1) throw Error(ErrorCode::InvalidParams, "window must be positive");
  if (epochs < 0) throw Error(ErrorCode::InvalidParams, "epochs must be nonnegative");
  if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidParams, "step size must be positive");
  if (batch_size < 1) throw Error(ErrorCode::InvalidParams, "batch size must be positive");
}

namespace {

double sample_loss(const ForecastModel& model, const HealthConverterNet& converter, const BoundParameters& mp,
                   const BoundParameters& cp, const WindowSample& s, double beta, DropoutSource* dropout,
                   double weight, bool differentiate) {
  const Var pred = forward(model, mp, ad::constant(s.history), static_cast<int>(s.target.rows()), dropout);
  const Var impact = convert(converter, cp, pred);
  const Var loss = composite_loss(pred, s.target, impact, s.impact / converter.output_scale, beta);
  if (differentiate) ad::backward(weight * loss);
  return loss.scalar();
}

}  // namespace

double mean_loss(const ForecastModel& model, const HealthConverterNet& converter,
                 const std::vector<WindowSample>& samples, double beta) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  const BoundParameters mp = bind_constants(model.params);
  const BoundParameters cp = bind_constants(converter.params);
  double total = 0.0;
  for (const auto& s : samples) total += sample_loss(model, converter, mp, cp, s, beta, nullptr, 1.0, false);
  return total / static_cast<double>(samples.size());
}

TrainResult train(ForecastModel model, HealthConverterNet converter, const DataSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw Error(ErrorCode::InsufficientData, "no training windows");
  if (model.shape.window != cfg.window || split.train.front().target.rows() != cfg.window)
    throw Error(ErrorCode::ShapeMismatch, "model, data and config disagree on the window length");
  check_finite(model.params);
  check_finite(converter.params);

  double scale = 0.0;
  for (const auto& s : split.train) scale += s.impact.cwiseAbs().sum();
  scale /= static_cast<double>(split.train.size() * static_cast<std::size_t>(cfg.window) * 2);
  converter.output_scale = scale > 0.0 ? scale : 1.0;

  TrainResult result{std::move(model), std::move(converter), {}};
  auto record = [&](int epoch) {
    LossRecord r{epoch, mean_loss(result.model, result.converter, split.train, cfg.beta),
                 mean_loss(result.model, result.converter, split.validation, cfg.beta)};
    if (!std::isfinite(r.train_loss))
      throw Error(ErrorCode::DivergedLoss, "training loss is not finite after epoch " + std::to_string(epoch));
    result.history.push_back(r);
  };
  record(0);

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  DropoutSource dropout{std::mt19937_64(cfg.seed ^ 0xd1b54a32d192ed03ULL), result.model.shape.dropout};
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const double weight = 1.0 / static_cast<double>(end - begin);
      BoundParameters mp = bind_variables(result.model.params);
      BoundParameters cp = bind_variables(result.converter.params);
      for (std::size_t i = begin; i < end; ++i) {
        const double loss = sample_loss(result.model, result.converter, mp, cp, split.train[order[i]], cfg.beta,
                                        &dropout, weight, true);
        if (!std::isfinite(loss)) throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
      }
      for (auto& [name, value] : result.model.params) value -= cfg.step_size * mp.at(name).grad();
      for (auto& [name, value] : result.converter.params) value -= cfg.step_size * cp.at(name).grad();
    }
    record(epoch);
  }
  return result;
}

ForecastModel initial_model(const ForecastDataset& dataset, const TrainConfig& cfg) {
  ModelShape shape;
  shape.architecture = cfg.architecture;
  shape.fuels = static_cast<int>(dataset.series.fuels());
  shape.window = cfg.window;
  return ForecastModel::create(shape, cfg.seed);
}

HealthConverterNet initial_converter(const ForecastDataset& dataset, const TrainConfig& cfg) {
  return HealthConverterNet::create(static_cast<int>(dataset.series.fuels()), cfg.seed + 1);
}

TrainResult train(const ForecastDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  return train(initial_model(dataset, cfg), initial_converter(dataset, cfg), make_splits(dataset, cfg.window), cfg);
}

Prediction predict(const ForecastModel& model, const HealthConverterNet& converter,
                   const std::vector<WindowSample>& samples) {
  Prediction out;
  for (const auto& s : samples) {
    out.mix.push_back(forward(model, s.history, static_cast<int>(s.target.rows())));
    out.impact.push_back(convert(converter, out.mix.back()));
  }
  return out;
}

Evaluation evaluate(const Prediction& prediction, const std::vector<WindowSample>& samples) {
  if (samples.empty() || prediction.mix.size() != samples.size())
    throw Error(ErrorCode::InsufficientData, "evaluation needs one prediction per window and at least one window");
  std::vector<double> mix_pred, mix_true, int_pred, int_true, ext_pred, ext_true;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Matrix& pm = prediction.mix[i];
    const Matrix& tm = samples[i].target;
    for (Eigen::Index r = 0; r < tm.rows(); ++r) {
      for (Eigen::Index c = 0; c < tm.cols(); ++c) {
        mix_pred.push_back(pm(r, c));
        mix_true.push_back(tm(r, c));
      }
      int_pred.push_back(prediction.impact[i](r, 0));
      int_true.push_back(samples[i].impact(r, 0));
      ext_pred.push_back(prediction.impact[i](r, 1));
      ext_true.push_back(samples[i].impact(r, 1));
    }
  }
  Evaluation e;
  e.fuel_nmae = nmae(mix_pred, mix_true);
  e.internal_nmae = nmae(int_pred, int_true);
  e.external_nmae = nmae(ext_pred, ext_true);
  e.health_nmae = 0.5 * (e.internal_nmae + e.external_nmae);
  return e;
}

Evaluation evaluate(const ForecastModel& model, const HealthConverterNet& converter,
                    const std::vector<WindowSample>& samples) {
  return evaluate(predict(model, converter, samples), samples);
}

std::vector<TradeoffPoint> beta_sweep(const ForecastDataset& dataset, std::vector<double> betas, const TrainConfig& cfg) {
  if (betas.empty()) throw Error(ErrorCode::InvalidParams, "no beta values to sweep");
  for (double b : betas) validate_beta(b);
  std::sort(betas.begin(), betas.end());
  const DataSplit split = make_splits(dataset, cfg.window);
  if (split.test.empty()) throw Error(ErrorCode::InsufficientData, "no held-out test windows");
  std::vector<TradeoffPoint> points;
  for (double beta : betas) {
    TrainConfig run = cfg;
    run.beta = beta;
    const TrainResult trained = train(initial_model(dataset, run), initial_converter(dataset, run), split, run);
    const Evaluation e = evaluate(trained.model, trained.converter, split.test);
    points.push_back({beta, e.fuel_nmae, e.health_nmae});
  }
  return points;
}

std::string format_checkpoint(const Checkpoint& checkpoint) {
  const ModelShape& s = checkpoint.model.shape;
  nlohmann::json j;
  j["format"] = "healthpredictor-checkpoint";
  j["version"] = 1;
  j["seed"] = checkpoint.config.seed;
  j["beta"] = checkpoint.config.beta;
  j["epochs"] = checkpoint.config.epochs;
  j["step_size"] = checkpoint.config.step_size;
  j["batch_size"] = checkpoint.config.batch_size;
  j["fuel_names"] = checkpoint.fuel_names;
  j["model"] = {{"architecture", std::string(to_string(s.architecture))},
                {"fuels", s.fuels},
                {"window", s.window},
                {"embed_dim", s.embed_dim},
                {"heads", s.heads},
                {"encoder_layers", s.encoder_layers},
                {"decoder_layers", s.decoder_layers},
                {"ffn_dim", s.ffn_dim},
                {"dropout", s.dropout},
                {"persistence_skip", s.persistence_skip},
                {"parameters", params_to_json(checkpoint.model.params)}};
  const HealthConverterNet& c = checkpoint.converter;
  j["converter"] = {{"fuels", c.fuels},
                    {"features", c.features},
                    {"hidden", c.hidden},
                    {"output_scale", c.output_scale},
                    {"parameters", params_to_json(c.params)}};
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    if (j.at("format") != "healthpredictor-checkpoint")
      throw Error(ErrorCode::MalformedRow, "not a healthpredictor checkpoint");
    Checkpoint cp;
    cp.config.seed = j.at("seed").get<std::uint64_t>();
    cp.config.beta = j.at("beta").get<double>();
    cp.config.epochs = j.at("epochs").get<int>();
    cp.config.step_size = j.at("step_size").get<double>();
    cp.config.batch_size = j.at("batch_size").get<int>();
    cp.fuel_names = j.at("fuel_names").get<std::vector<std::string>>();
    const auto& m = j.at("model");
    ModelShape& s = cp.model.shape;
    s.architecture = parse_architecture(m.at("architecture").get<std::string>());
    s.fuels = m.at("fuels").get<int>();
    s.window = m.at("window").get<int>();
    s.embed_dim = m.at("embed_dim").get<int>();
    s.heads = m.at("heads").get<int>();
    s.encoder_layers = m.at("encoder_layers").get<int>();
    s.decoder_layers = m.at("decoder_layers").get<int>();
    s.ffn_dim = m.at("ffn_dim").get<int>();
    s.dropout = m.at("dropout").get<double>();
    s.persistence_skip = m.at("persistence_skip").get<bool>();
    s.validate();
    cp.model.params = params_from_json(m.at("parameters"));
    cp.config.window = s.window;
    cp.config.architecture = s.architecture;
    const auto& c = j.at("converter");
    cp.converter.fuels = c.at("fuels").get<int>();
    cp.converter.features = c.at("features").get<int>();
    cp.converter.hidden = c.at("hidden").get<int>();
    cp.converter.output_scale = c.at("output_scale").get<double>();
    cp.converter.params = params_from_json(c.at("parameters"));
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRow, std::string("checkpoint: ") + e.what());
  }
}

std::string format_loss_history(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : history)
    out << r.epoch << ',' << csv::format_double(r.train_loss) << ',' << csv::format_double(r.val_loss) << '\n';
  return out.str();
}

std::string format_tradeoff(const std::vector<TradeoffPoint>& points) {
  std::ostringstream out;
  out << "beta,fuel_nmae,health_nmae\n";
  for (const auto& p : points)
    out << csv::format_double(p.beta) << ',' << csv::format_double(p.fuel_nmae) << ',' << csv::format_double(p.health_nmae)
        << '\n';
  return out.str();
}

}  // namespace hp
