#include "healthpredictor/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"
#include "healthpredictor/forecaster.hpp"
#include "healthpredictor/health.hpp"
#include "healthpredictor/ingest.hpp"
#include "healthpredictor/scheduler.hpp"
#include "healthpredictor/synth.hpp"

namespace hp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  const std::string bytes = csv::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Io, "sha256 failed for " + path.string());
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

namespace {

// A config key: optionally backed by a flag, always settable from JSON.
struct Binding {
  CLI::Option* option = nullptr;
  std::function<void(const json&)> set;
  std::function<json()> get;
};

struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, Binding> keys;
  std::string config_path;
  std::function<void(Command&)> action;
};

template <typename T>
CLI::Option* bind_key(Command& cmd, const std::string& key, T& var, const std::string& help) {
  CLI::Option* opt = cmd.app->add_option("--" + key, var, help)->capture_default_str();
  cmd.keys[key] = {opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }};
  return opt;
}

void apply_config(Command& cmd) {
  if (cmd.config_path.empty()) return;
  if (!fs::is_regular_file(cmd.config_path)) throw Error(ErrorCode::Io, "config file not found: " + cmd.config_path);
  json j;
  try {
    j = json::parse(csv::read_file(cmd.config_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, cmd.config_path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, cmd.config_path + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = cmd.keys.find(key);
    if (it == cmd.keys.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    if (it->second.option && it->second.option->count() > 0) continue;
    try {
      it->second.set(value);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "config key '" + key + "': " + e.what());
    }
  }
}

json snapshot(const Command& cmd) {
  json out = json::object();
  for (const auto& [key, b] : cmd.keys) out[key] = b.get();
  return out;
}

// Files written by a command; removed again if the command fails.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  fs::path write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    written_.push_back(path);
    csv::write_file(path, content);
    return path;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    written_.clear();
  }

  const std::vector<fs::path>& written() const { return written_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorCode::InvalidConfig, what + " is required");
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, what + " not found: " + path);
}

void prepare_out(const std::string& out) {
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!fs::is_directory(out)) throw Error(ErrorCode::Io, "cannot create output directory " + out);
}

void write_manifest(Outputs& outputs, const Command& cmd, const std::vector<std::string>& inputs, std::uint64_t seed,
                    std::chrono::steady_clock::time_point started) {
  json m;
  m["command"] = cmd.app->get_name();
  m["version"] = kVersion;
  m["seed"] = seed;
  m["config"] = snapshot(cmd);
  m["inputs"] = json::object();
  for (const auto& in : inputs)
    if (!in.empty()) m["inputs"][in] = sha256_file(in);
  json outs = json::array();
  for (const auto& p : outputs.written()) outs.push_back(p.string());
  outs.push_back((outputs.dir() / "manifest.json").string());
  m["outputs"] = outs;
  m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  outputs.write("manifest.json", m.dump(2) + "\n");
}

ForecastDataset load_dataset(const std::string& dataset, const std::string& labels) {
  ForecastDataset d;
  d.series = load_fuel_mix(dataset, FuelCategoryMap::identity());
  if (labels.empty()) {
    for (const auto& r : d.series.records) d.labels.push_back({r.timestamp, 0.0, 0.0});
  } else {
    d.labels = parse_signals(csv::read_file(labels), labels);
  }
  d.validate();
  return d;
}

SessionSampler default_sampler(const std::vector<HealthSignal>& signal) {
  SessionSampler s;
  s.arrival_hist.assign(24, 0.0);
  s.departure_hist.assign(24, 0.0);
  const double arrivals[] = {1, 3, 5, 5, 3, 1};
  for (int i = 0; i < 6; ++i) s.arrival_hist[static_cast<std::size_t>(16 + i)] = arrivals[i];
  const double departures[] = {2, 5, 4, 2};
  for (int i = 0; i < 4; ++i) s.departure_hist[static_cast<std::size_t>(6 + i)] = departures[i];
  s.demand = {DemandDistribution::Kind::Uniform, {8.0, 30.0}};
  if (!signal.empty()) {
    const std::int64_t first = signal.front().timestamp;
    s.start_timestamp = (first + 23) / 24 * 24;
    const std::int64_t span = signal.back().timestamp + 1 - s.start_timestamp;
    s.days = static_cast<int>(std::max<std::int64_t>(1, span / 24 - 1));
  }
  return s;
}

SessionSampler parse_sampler(const json& j, SessionSampler s) {
  static const std::vector<std::string> known = {"arrival_hist", "departure_hist", "demand", "rate_kw", "days",
                                                 "start_timestamp"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "sampler must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorCode::InvalidConfig, "unknown sampler key '" + key + "'");
  }
  try {
    if (j.contains("arrival_hist")) s.arrival_hist = j["arrival_hist"].get<std::vector<double>>();
    if (j.contains("departure_hist")) s.departure_hist = j["departure_hist"].get<std::vector<double>>();
    if (j.contains("rate_kw")) s.rate_kw = j["rate_kw"].get<double>();
    if (j.contains("days")) s.days = j["days"].get<int>();
    if (j.contains("start_timestamp")) s.start_timestamp = j["start_timestamp"].get<std::int64_t>();
    if (j.contains("demand")) {
      const auto& d = j["demand"];
      const std::string kind = d.at("kind").get<std::string>();
      if (kind == "empirical") s.demand.kind = DemandDistribution::Kind::Empirical;
      else if (kind == "uniform") s.demand.kind = DemandDistribution::Kind::Uniform;
      else if (kind == "normal") s.demand.kind = DemandDistribution::Kind::Normal;
      else throw Error(ErrorCode::InvalidConfig, "unknown demand kind '" + kind + "'");
      s.demand.values = d.at("values").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("sampler: ") + e.what());
  }
  return s;
}

json sampler_to_json(const SessionSampler& s) {
  static const char* kinds[] = {"empirical", "uniform", "normal"};
  return {{"arrival_hist", s.arrival_hist},
          {"departure_hist", s.departure_hist},
          {"demand", {{"kind", kinds[static_cast<int>(s.demand.kind)]}, {"values", s.demand.values}}},
          {"rate_kw", s.rate_kw},
          {"days", s.days},
          {"start_timestamp", s.start_timestamp}};
}

std::vector<Strategy> parse_strategy_list(const std::string& text) {
  if (text == "all") return {std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::vector<Strategy> out;
  for (const auto& part : csv::split(text, ',')) out.push_back(parse_strategy(csv::trim(part)));
  return out;
}

// Forecast origins stepped by `horizon` from `first` to the end of the data,
// each with the preceding `window` hours as history.
std::vector<WindowSample> rolling_windows(const ForecastDataset& dataset, std::int64_t first, int window, int horizon) {
  const Eigen::MatrixXd shares = dataset.series.shares();
  const auto n = static_cast<Eigen::Index>(dataset.series.size());
  std::vector<WindowSample> out;
  for (Eigen::Index start = first - dataset.series.records.front().timestamp; start + horizon <= n; start += horizon) {
    WindowSample s;
    s.target_start = dataset.series.records[static_cast<std::size_t>(start)].timestamp;
    s.history = shares.middleRows(start - window, window);
    s.target = shares.middleRows(start, horizon);
    s.impact.resize(horizon, 2);
    for (int t = 0; t < horizon; ++t) {
      const HealthSignal& l = dataset.labels[static_cast<std::size_t>(start + t)];
      s.impact(t, 0) = l.internal_cost;
      s.impact(t, 1) = l.external_cost;
    }
    out.push_back(std::move(s));
  }
  return out;
}

void check_window(int window) {
  if (window != 24 && window != 72) throw Error(ErrorCode::InvalidConfig, "--window must be 24 or 72");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Hourly health-impact signals from grid fuel mix, and health-aware EV charging.", "healthpredictor"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>());
    Command& c = *commands.back();
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "JSON file of key/value settings; flags take precedence");
    return c;
  };

  // ingest
  std::string mix_path, map_path, ingest_out;
  int period = 24;
  Command& ingest = add("ingest", "Impute and normalize a raw fuel-mix CSV into a canonical dataset");
  bind_key(ingest, "mix", mix_path, "Raw fuel-mix CSV (timestamp column plus one column per source label)");
  bind_key(ingest, "map", map_path, "Category map CSV raw_label,canonical (default: identity on canonical names)");
  bind_key(ingest, "out", ingest_out, "Output directory");
  bind_key(ingest, "period", period, "Seasonal period in hours for gap filling");
  ingest.action = [&](Command& cmd) {
    require_file(mix_path, "--mix");
    if (!map_path.empty()) require_file(map_path, "--map");
    prepare_out(ingest_out);
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(ingest_out);
    try {
      const FuelCategoryMap map = map_path.empty() ? FuelCategoryMap::identity() : FuelCategoryMap::load(map_path);
      const FuelMixSeries raw = load_fuel_mix(mix_path, map);
      const std::size_t missing = raw.count(CellFlag::Missing);
      const FuelMixSeries filled = missing > 0 ? impute_missing(raw, period) : raw;
      const FuelMixSeries dataset = normalize_mix(filled);
      outputs.write("dataset.csv", format_fuel_mix(dataset));
      write_manifest(outputs, cmd, {mix_path, map_path}, 0, started);
      std::cout << "records " << dataset.size() << "\n"
                << "fuels " << dataset.fuels() << "\n"
                << "missing " << missing << "\n"
                << "imputed " << dataset.count(CellFlag::Imputed) << "\n";
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  // synth
  SynthConfig synth_cfg;
  std::string synth_out, single_fuel;
  Command& synth = add("synth", "Write a seeded synthetic region bundle with oracle health labels");
  bind_key(synth, "out", synth_out, "Output directory");
  bind_key(synth, "hours", synth_cfg.hours, "Number of hourly records");
  bind_key(synth, "start", synth_cfg.start_timestamp, "Timestamp (hour index) of the first record");
  bind_key(synth, "seed", synth_cfg.seed, "Random seed");
  bind_key(synth, "noise", synth_cfg.noise, "Relative amplitude of the AR(1) output and load perturbations");
  bind_key(synth, "missing", synth_cfg.missing_fraction, "Fraction of fuel-mix cells left blank");
  bind_key(synth, "receptors", synth_cfg.receptors, "Number of receptor regions");
  bind_key(synth, "single-fuel", single_fuel, "Force every hour to 100% of this canonical fuel");
  synth.action = [&](Command& cmd) {
    prepare_out(synth_out);
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(synth_out);
    try {
      SynthConfig cfg = synth_cfg;
      if (!single_fuel.empty()) cfg.single_fuel = single_fuel;
      const SynthBundle bundle = make_synthetic_bundle(cfg);
      for (const auto& [name, content] : bundle_files(bundle)) outputs.write(name, content);
      write_manifest(outputs, cmd, {}, cfg.seed, started);
      std::cout << "records " << bundle.series.size() << "\n"
                << "receptors " << bundle.config.receptors.size() << "\n"
                << "blanked " << bundle.raw_series.count(CellFlag::Missing) << "\n";
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  // Shared training options.
  struct TrainOptions {
    std::string dataset, labels, out, arch = "attention";
    TrainConfig cfg;
    std::vector<double> betas{0.5, 0.998};
  };
  auto bind_training = [&](Command& cmd, TrainOptions& o) {
    bind_key(cmd, "dataset", o.dataset, "Canonical dataset CSV (timestamp plus fuel shares)");
    bind_key(cmd, "labels", o.labels, "Health label CSV timestamp,internal_usd_per_mwh,external_usd_per_mwh");
    bind_key(cmd, "out", o.out, "Output directory");
    bind_key(cmd, "window", o.cfg.window, "Context length and forecast horizon T (24 or 72)");
    bind_key(cmd, "epochs", o.cfg.epochs, "Training epochs");
    bind_key(cmd, "lr", o.cfg.step_size, "SGD step size");
    bind_key(cmd, "batch", o.cfg.batch_size, "Minibatch size");
    bind_key(cmd, "seed", o.cfg.seed, "Seed for initialization, shuffling and dropout");
    bind_key(cmd, "arch", o.arch, "attention or linear");
  };
  auto resolve_training = [](TrainOptions& o) {
    require_file(o.dataset, "--dataset");
    require_file(o.labels, "--labels");
    prepare_out(o.out);
    check_window(o.cfg.window);
    o.cfg.architecture = parse_architecture(o.arch);
  };

  TrainOptions train_opts;
  Command& train_cmd = add("train", "Train the forecaster and health converter on one beta");
  bind_training(train_cmd, train_opts);
  bind_key(train_cmd, "beta", train_opts.cfg.beta, "Composite-loss weight on fuel-mix error, in (0, 0.998]");
  train_cmd.action = [&](Command& cmd) {
    resolve_training(train_opts);
    train_opts.cfg.validate();
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(train_opts.out);
    try {
      const ForecastDataset dataset = load_dataset(train_opts.dataset, train_opts.labels);
      const TrainResult result = train(dataset, train_opts.cfg);
      const Checkpoint cp{result.model, result.converter, dataset.series.fuel_names, train_opts.cfg};
      outputs.write("checkpoint.json", format_checkpoint(cp));
      outputs.write("loss_history.csv", format_loss_history(result.history));
      write_manifest(outputs, cmd, {train_opts.dataset, train_opts.labels}, train_opts.cfg.seed, started);
      const LossRecord& last = result.history.back();
      std::cout << "epochs " << last.epoch << "\n"
                << "train_loss " << csv::format_double(last.train_loss) << "\n"
                << "val_loss " << csv::format_double(last.val_loss) << "\n";
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  TrainOptions sweep_opts;
  Command& sweep_cmd = add("sweep", "Train one model per beta and report held-out NMAE");
  bind_training(sweep_cmd, sweep_opts);
  bind_key(sweep_cmd, "betas", sweep_opts.betas, "Comma-separated beta values")->delimiter(',');
  sweep_cmd.action = [&](Command& cmd) {
    resolve_training(sweep_opts);
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(sweep_opts.out);
    try {
      const ForecastDataset dataset = load_dataset(sweep_opts.dataset, sweep_opts.labels);
      const auto points = beta_sweep(dataset, sweep_opts.betas, sweep_opts.cfg);
      outputs.write("tradeoff.csv", format_tradeoff(points));
      write_manifest(outputs, cmd, {sweep_opts.dataset, sweep_opts.labels}, sweep_opts.cfg.seed, started);
      for (const auto& p : points)
        std::cout << "beta " << csv::format_double(p.beta) << " fuel_nmae " << csv::format_double(p.fuel_nmae)
                  << " health_nmae " << csv::format_double(p.health_nmae) << "\n";
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  std::string ckpt_path, predict_dataset, predict_labels, predict_out;
  int horizon = 0;
  Command& predict_cmd = add("predict", "Forecast health signals for the held-out windows of a dataset");
  bind_key(predict_cmd, "checkpoint", ckpt_path, "checkpoint.json written by train");
  bind_key(predict_cmd, "dataset", predict_dataset, "Canonical dataset CSV");
  bind_key(predict_cmd, "labels", predict_labels, "Optional health labels; when given, NMAE is reported");
  bind_key(predict_cmd, "out", predict_out, "Output directory");
  bind_key(predict_cmd, "horizon", horizon, "Hours forecast per origin; origins step by this many hours across the test span (default: the window)");
  predict_cmd.action = [&](Command& cmd) {
    require_file(ckpt_path, "--checkpoint");
    require_file(predict_dataset, "--dataset");
    if (!predict_labels.empty()) require_file(predict_labels, "--labels");
    prepare_out(predict_out);
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(predict_out);
    try {
      const Checkpoint cp = parse_checkpoint(csv::read_file(ckpt_path));
      const ForecastDataset dataset = load_dataset(predict_dataset, predict_labels);
      if (dataset.series.fuel_names != cp.fuel_names)
        throw Error(ErrorCode::ShapeMismatch, "dataset fuels differ from the checkpoint's");
      const int window = cp.model.shape.window;
      const int h = horizon == 0 ? window : horizon;
      if (h < 1 || h > window) throw Error(ErrorCode::ShapeMismatch, "--horizon must lie in [1, window]");
      DataSplit split = make_splits(dataset, window);
      if (split.test.empty()) throw Error(ErrorCode::InsufficientData, "no held-out windows");
      if (h < window) split.test = rolling_windows(dataset, split.test.front().target_start, window, h);
      const Prediction pred = predict(cp.model, cp.converter, split.test);
      std::vector<HealthSignal> signal;
      FuelMixSeries mix;
      mix.fuel_names = cp.fuel_names;
      for (std::size_t w = 0; w < split.test.size(); ++w) {
        for (int t = 0; t < h; ++t) {
          const std::int64_t ts = split.test[w].target_start + t;
          signal.push_back({ts, pred.impact[w](t, 0), pred.impact[w](t, 1)});
          mix.records.push_back({ts, pred.mix[w].row(t).transpose(),
                                 std::vector<CellFlag>(cp.fuel_names.size(), CellFlag::Observed)});
        }
      }
      outputs.write("signal.csv", format_signals(signal));
      outputs.write("predicted_mix.csv", format_fuel_mix(mix));
      write_manifest(outputs, cmd, {ckpt_path, predict_dataset, predict_labels}, cp.config.seed, started);
      std::cout << "windows " << split.test.size() << "\n" << "hours " << signal.size() << "\n";
      if (!predict_labels.empty()) {
        const Evaluation e = evaluate(pred, split.test);
        std::cout << "fuel_nmae " << csv::format_double(e.fuel_nmae) << "\n"
                  << "health_nmae " << csv::format_double(e.health_nmae) << "\n";
      }
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  std::string signal_path, sessions_path, schedule_out, strategy_text = "all";
  int sample_count = 0;
  std::uint64_t schedule_seed = 0;
  json sampler_json = json::object();
  Command& schedule_cmd = add("schedule", "Schedule EV charging sessions against a health signal");
  bind_key(schedule_cmd, "signal", signal_path, "Health signal CSV");
  bind_key(schedule_cmd, "sessions", sessions_path, "Sessions CSV session_id,arrival,departure,demand_kwh,rate_kw");
  bind_key(schedule_cmd, "sample", sample_count, "Sample this many sessions instead of reading --sessions");
  bind_key(schedule_cmd, "seed", schedule_seed, "Seed for session sampling");
  bind_key(schedule_cmd, "strategy", strategy_text, "Rows to report: all, or a comma list of strategy names");
  bind_key(schedule_cmd, "out", schedule_out, "Output directory");
  schedule_cmd.keys["sampler"] = {nullptr, [&](const json& j) { sampler_json = j; }, [&] { return sampler_json; }};
  schedule_cmd.action = [&](Command& cmd) {
    require_file(signal_path, "--signal");
    if (sample_count == 0) require_file(sessions_path, "--sessions");
    else if (sample_count < 0) throw Error(ErrorCode::InvalidConfig, "--sample must be positive");
    prepare_out(schedule_out);
    const std::vector<Strategy> rows = parse_strategy_list(strategy_text);
    const auto started = std::chrono::steady_clock::now();
    Outputs outputs(schedule_out);
    try {
      const auto signal = parse_signals(csv::read_file(signal_path), signal_path);
      std::vector<ChargingSession> sessions;
      if (sample_count > 0) {
        const SessionSampler sampler = parse_sampler(sampler_json, default_sampler(signal));
        sampler_json = sampler_to_json(sampler);
        sessions = sample_sessions(sample_count, sampler, schedule_seed);
        outputs.write("sessions.csv", format_sessions(sessions));
      } else {
        sessions = parse_sessions(csv::read_file(sessions_path), sessions_path);
      }
      const auto totals = evaluate_fleet(sessions, signal, {std::begin(kAllStrategies), std::end(kAllStrategies)});
      outputs.write("fleet_results.csv", format_fleet_results(totals, rows));
      write_manifest(outputs, cmd, {signal_path, sample_count > 0 ? std::string() : sessions_path}, schedule_seed,
                     started);
      for (const auto& t : totals)
        std::cout << to_string(t.strategy) << " " << csv::format_double(t.total_usd) << "\n";
    } catch (...) {
      outputs.rollback();
      throw;
    }
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& c : commands) {
      if (!c->app->parsed()) continue;
      apply_config(*c);
      c->action(*c);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hp::cli
