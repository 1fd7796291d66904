#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "healthpredictor/health.hpp"

namespace hp {

struct ChargingSession {
  std::string session_id;
  std::int64_t arrival = 0;    // first usable slot
  std::int64_t departure = 0;  // last usable slot, inclusive
  double demand_kwh = 0.0;
  double rate_kw = 0.0;  // energy per one-hour slot

  std::int64_t window() const { return departure - arrival + 1; }
  // Number of slots the session charges in; the last one may be partial.
  int slots_needed() const;
  void validate() const;  // throws InfeasibleSession
};

// Charging plan over the session window. bits[j] / energy_kwh[j] refer to
// slot arrival + j.
struct Schedule {
  std::vector<std::uint8_t> bits;
  std::vector<double> energy_kwh;

  int selected() const;
  double energy() const;
};

enum class Strategy { Optimal, FirstHours, LatestHours, Continuous };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
inline constexpr Strategy kAllStrategies[] = {Strategy::Optimal, Strategy::FirstHours, Strategy::LatestHours,
                                              Strategy::Continuous};

struct StrategyResult {
  Strategy strategy = Strategy::Optimal;
  double total_cost = 0.0;  // USD
  Schedule schedule;
};

// Energy placement for a chosen slot set: every selected slot delivers the
// full rate except the costliest one (latest among ties), which delivers the
// remainder when the demand is not a whole number of slots.
Schedule schedule_from_slots(const ChargingSession& session, std::span<const double> h,
                             const std::vector<int>& slots);

// Sum of energy * h over the window, in slot order. h is $/kWh per slot.
double schedule_cost(const Schedule& schedule, std::span<const double> h);

Schedule optimal_schedule(const ChargingSession& session, std::span<const double> h);
Schedule baseline_schedule(const ChargingSession& session, std::span<const double> h, Strategy strategy);
Schedule run_strategy(const ChargingSession& session, std::span<const double> h, Strategy strategy);

inline constexpr int kBruteForceMaxWindow = 20;
// Exhaustive reference solver, exponential in the window length.
Schedule brute_force_schedule(const ChargingSession& session, std::span<const double> h);

inline constexpr double kKwhPerMwh = 1000.0;

// Per-slot $/kWh health cost for a session window: (internal + external)
// $/MWh / 1000. Throws SignalCoverageGap if the window leaves the signal.
std::vector<double> session_costs(const ChargingSession& session, const std::vector<HealthSignal>& signal);

struct FleetTotal {
  Strategy strategy;
  double total_usd = 0.0;
};

std::vector<FleetTotal> evaluate_fleet(const std::vector<ChargingSession>& sessions,
                                       const std::vector<HealthSignal>& signal, const std::vector<Strategy>& strategies);

// Percent reduction of `value` relative to `reference` (0 when the reference is 0).
double reduction_pct(double value, double reference);

// `strategy,total_usd,reduction_vs_first_pct,reduction_vs_latest_pct,reduction_vs_continuous_pct`
// Requires totals for first_hours, latest_hours and continuous among `all`;
// only rows in `rows` are written.
std::string format_fleet_results(const std::vector<FleetTotal>& all, const std::vector<Strategy>& rows);

struct DemandDistribution {
  enum class Kind { Empirical, Uniform, Normal } kind = Kind::Empirical;
  // Empirical: the sample pool. Uniform: {lo, hi}. Normal: {mean, sd}, truncated at 0.
  std::vector<double> values;
};

struct SessionSampler {
  std::vector<double> arrival_hist;    // 24 hour-of-day weights
  std::vector<double> departure_hist;  // 24 hour-of-day weights
  DemandDistribution demand;
  double rate_kw = 7.2;
  int days = 1;                        // arrival day drawn uniformly from [0, days)
  std::int64_t start_timestamp = 0;    // hour index of midnight on day 0
};

// Departure hours at or before the arrival hour roll over to the next day.
std::vector<ChargingSession> sample_sessions(int count, const SessionSampler& sampler, std::uint64_t seed);

// `session_id,arrival,departure,demand_kwh,rate_kw`
std::vector<ChargingSession> parse_sessions(const std::string& text, const std::string& source = "<memory>");
std::string format_sessions(const std::vector<ChargingSession>& sessions);

}  // namespace hp
