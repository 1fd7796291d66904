#include "healthpredictor/scheduler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "healthpredictor/csv.hpp"
#include "healthpredictor/errors.hpp"

namespace hp {

namespace {

void require_costs(const ChargingSession& session, std::span<const double> h) {
  session.validate();
  if (static_cast<std::int64_t>(h.size()) != session.window())
    throw Error(ErrorCode::DimensionMismatch, "session '" + session.session_id + "' spans " +
                                                  std::to_string(session.window()) + " slots but " +
                                                  std::to_string(h.size()) + " costs were given");
}

std::vector<int> block(int start, int n) {
  std::vector<int> slots(static_cast<std::size_t>(n));
  std::iota(slots.begin(), slots.end(), start);
  return slots;
}

}  // namespace

int ChargingSession::slots_needed() const {
  if (demand_kwh <= 0.0) return 0;
  auto n = static_cast<int>(std::ceil(demand_kwh / rate_kw));
  // Guard against a quotient like 3.0000000000000004 for an exact multiple.
  if (n > 1 && static_cast<double>(n - 1) * rate_kw >= demand_kwh) --n;
  return n;
}

void ChargingSession::validate() const {
  const std::string who = "session '" + session_id + "'";
  if (departure < arrival) throw Error(ErrorCode::InfeasibleSession, who + " departs before it arrives");
  if (!(rate_kw > 0.0)) throw Error(ErrorCode::InfeasibleSession, who + " has a non-positive charging rate");
  if (!(demand_kwh >= 0.0)) throw Error(ErrorCode::InfeasibleSession, who + " has a negative demand");
  if (slots_needed() > window())
    throw Error(ErrorCode::InfeasibleSession, who + " needs " + std::to_string(slots_needed()) + " slots but its window has " +
                                                  std::to_string(window()));
}

int Schedule::selected() const { return static_cast<int>(std::count(bits.begin(), bits.end(), 1)); }

double Schedule::energy() const { return std::accumulate(energy_kwh.begin(), energy_kwh.end(), 0.0); }

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Optimal: return "optimal";
    case Strategy::FirstHours: return "first_hours";
    case Strategy::LatestHours: return "latest_hours";
    case Strategy::Continuous: return "continuous";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies)
    if (to_string(s) == name) return s;
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

Schedule schedule_from_slots(const ChargingSession& session, std::span<const double> h, const std::vector<int>& slots) {
  const int n = session.slots_needed();
  if (static_cast<int>(slots.size()) != n)
    throw Error(ErrorCode::InvalidParams, "slot set size does not match the session's demand");
  const auto w = static_cast<std::size_t>(session.window());
  Schedule s{std::vector<std::uint8_t>(w, 0), std::vector<double>(w, 0.0)};
  if (n == 0) return s;

  int partial = -1;
  for (int slot : slots) {
    s.bits[static_cast<std::size_t>(slot)] = 1;
    s.energy_kwh[static_cast<std::size_t>(slot)] = session.rate_kw;
    if (partial < 0 || h[static_cast<std::size_t>(slot)] > h[static_cast<std::size_t>(partial)] ||
        (h[static_cast<std::size_t>(slot)] == h[static_cast<std::size_t>(partial)] && slot > partial))
      partial = slot;
  }
  s.energy_kwh[static_cast<std::size_t>(partial)] = session.demand_kwh - static_cast<double>(n - 1) * session.rate_kw;
  return s;
}

double schedule_cost(const Schedule& schedule, std::span<const double> h) {
  if (schedule.energy_kwh.size() != h.size()) throw Error(ErrorCode::DimensionMismatch, "schedule and cost lengths differ");
  double total = 0.0;
  for (std::size_t t = 0; t < h.size(); ++t) total += schedule.energy_kwh[t] * h[t];
  return total;
}

Schedule optimal_schedule(const ChargingSession& session, std::span<const double> h) {
  require_costs(session, h);
  const int w = static_cast<int>(session.window());
  std::vector<int> order(static_cast<std::size_t>(w));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return h[static_cast<std::size_t>(a)] < h[static_cast<std::size_t>(b)]; });
  order.resize(static_cast<std::size_t>(session.slots_needed()));
  return schedule_from_slots(session, h, order);
}

Schedule baseline_schedule(const ChargingSession& session, std::span<const double> h, Strategy strategy) {
  require_costs(session, h);
  const int w = static_cast<int>(session.window());
  const int n = session.slots_needed();
  switch (strategy) {
    case Strategy::FirstHours: return schedule_from_slots(session, h, block(0, n));
    case Strategy::LatestHours: return schedule_from_slots(session, h, block(w - n, n));
    case Strategy::Continuous: {
      Schedule best;
      double best_cost = std::numeric_limits<double>::infinity();
      for (int start = 0; start + n <= w; ++start) {
        Schedule candidate = schedule_from_slots(session, h, block(start, n));
        const double cost = schedule_cost(candidate, h);
        if (cost < best_cost) {
          best_cost = cost;
          best = std::move(candidate);
        }
      }
      return best;
    }
    case Strategy::Optimal: break;
  }
  throw Error(ErrorCode::InvalidParams, "baseline_schedule does not handle strategy '" + std::string(to_string(strategy)) + "'");
}

Schedule run_strategy(const ChargingSession& session, std::span<const double> h, Strategy strategy) {
  return strategy == Strategy::Optimal ? optimal_schedule(session, h) : baseline_schedule(session, h, strategy);
}

Schedule brute_force_schedule(const ChargingSession& session, std::span<const double> h) {
  require_costs(session, h);
  const int w = static_cast<int>(session.window());
  if (w > kBruteForceMaxWindow)
    throw Error(ErrorCode::WindowTooLarge, "brute force supports windows up to " + std::to_string(kBruteForceMaxWindow) +
                                               " slots, got " + std::to_string(w));
  const int n = session.slots_needed();
  const double remainder = session.demand_kwh - static_cast<double>(n - 1) * session.rate_kw;

  std::uint32_t best_mask = 0;
  bool found = false;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << w); ++mask) {
    if (std::popcount(mask) != n) continue;
    int partial = -1;
    for (int t = 0; t < w; ++t)
      if ((mask >> t) & 1u && (partial < 0 || h[static_cast<std::size_t>(t)] >= h[static_cast<std::size_t>(partial)]))
        partial = t;
    double cost = 0.0;
    for (int t = 0; t < w; ++t) {
      const double e = !((mask >> t) & 1u) ? 0.0 : (t == partial ? remainder : session.rate_kw);
      cost += e * h[static_cast<std::size_t>(t)];
    }
    // Ties go to the set whose earliest differing slot comes first.
    const bool earlier = found && cost == best_cost && (std::countr_zero(mask ^ best_mask) < w) &&
                         ((mask >> std::countr_zero(mask ^ best_mask)) & 1u);
    if (!found || cost < best_cost || earlier) {
      best_cost = cost;
      best_mask = mask;
      found = true;
    }
  }
  std::vector<int> slots;
  for (int t = 0; t < w; ++t)
    if ((best_mask >> t) & 1u) slots.push_back(t);
  return schedule_from_slots(session, h, slots);
}

std::vector<double> session_costs(const ChargingSession& session, const std::vector<HealthSignal>& signal) {
  if (signal.empty() || session.arrival < signal.front().timestamp || session.departure > signal.back().timestamp)
    throw Error(ErrorCode::SignalCoverageGap, "session '" + session.session_id + "' window [" +
                                                  std::to_string(session.arrival) + ", " +
                                                  std::to_string(session.departure) + "] is not covered by the signal");
  const auto offset = static_cast<std::size_t>(session.arrival - signal.front().timestamp);
  std::vector<double> h(static_cast<std::size_t>(session.window()));
  for (std::size_t j = 0; j < h.size(); ++j) {
    const HealthSignal& s = signal[offset + j];
    if (s.timestamp != session.arrival + static_cast<std::int64_t>(j))
      throw Error(ErrorCode::SignalCoverageGap, "signal is not hourly around session '" + session.session_id + "'");
    h[j] = s.total() / kKwhPerMwh;
  }
  return h;
}

std::vector<FleetTotal> evaluate_fleet(const std::vector<ChargingSession>& sessions,
                                       const std::vector<HealthSignal>& signal, const std::vector<Strategy>& strategies) {
  std::vector<FleetTotal> totals;
  for (Strategy s : strategies) totals.push_back({s, 0.0});
  for (const auto& session : sessions) {
    const auto h = session_costs(session, signal);
    for (auto& total : totals) total.total_usd += schedule_cost(run_strategy(session, h, total.strategy), h);
  }
  return totals;
}

double reduction_pct(double value, double reference) {
  return reference == 0.0 ? 0.0 : 100.0 * (reference - value) / reference;
}

std::string format_fleet_results(const std::vector<FleetTotal>& all, const std::vector<Strategy>& rows) {
  auto total_of = [&](Strategy s) {
    for (const auto& t : all)
      if (t.strategy == s) return t.total_usd;
    throw Error(ErrorCode::InvalidParams, "fleet totals lack strategy '" + std::string(to_string(s)) + "'");
  };
  const double first = total_of(Strategy::FirstHours);
  const double latest = total_of(Strategy::LatestHours);
  const double continuous = total_of(Strategy::Continuous);
  std::ostringstream out;
  out << "strategy,total_usd,reduction_vs_first_pct,reduction_vs_latest_pct,reduction_vs_continuous_pct\n";
  for (Strategy s : rows) {
    const double v = total_of(s);
    out << to_string(s) << ',' << csv::format_double(v) << ',' << csv::format_double(reduction_pct(v, first)) << ','
        << csv::format_double(reduction_pct(v, latest)) << ',' << csv::format_double(reduction_pct(v, continuous)) << '\n';
  }
  return out.str();
}

namespace {

std::discrete_distribution<int> hour_distribution(const std::vector<double>& hist, const char* what) {
  if (hist.size() != 24) throw Error(ErrorCode::DegenerateDistribution, std::string(what) + " histogram needs 24 bins");
  double total = 0.0;
  for (double w : hist) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::DegenerateDistribution, std::string(what) + " histogram has a negative or non-finite weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateDistribution, std::string(what) + " histogram has no mass");
  return std::discrete_distribution<int>(hist.begin(), hist.end());
}

}  // namespace

std::vector<ChargingSession> sample_sessions(int count, const SessionSampler& sampler, std::uint64_t seed) {
  if (count < 0) throw Error(ErrorCode::InvalidParams, "session count must be nonnegative");
  if (sampler.days < 1) throw Error(ErrorCode::DegenerateDistribution, "sampler needs at least one day");
  if (!(sampler.rate_kw > 0.0)) throw Error(ErrorCode::DegenerateDistribution, "charging rate must be positive");
  auto arrivals = hour_distribution(sampler.arrival_hist, "arrival");
  auto departures = hour_distribution(sampler.departure_hist, "departure");

  const auto& d = sampler.demand;
  switch (d.kind) {
    case DemandDistribution::Kind::Empirical:
      if (d.values.empty()) throw Error(ErrorCode::DegenerateDistribution, "empirical demand list is empty");
      for (double v : d.values)
        if (!(v >= 0.0)) throw Error(ErrorCode::DegenerateDistribution, "empirical demands must be nonnegative");
      break;
    case DemandDistribution::Kind::Uniform:
      if (d.values.size() != 2 || !(d.values[0] >= 0.0) || !(d.values[1] >= d.values[0]))
        throw Error(ErrorCode::DegenerateDistribution, "uniform demand needs 0 <= lo <= hi");
      break;
    case DemandDistribution::Kind::Normal:
      if (d.values.size() != 2 || !(d.values[1] >= 0.0) || !std::isfinite(d.values[0]))
        throw Error(ErrorCode::DegenerateDistribution, "normal demand needs a finite mean and sd >= 0");
      break;
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> day_of(0, sampler.days - 1);
  std::vector<ChargingSession> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::int64_t midnight = sampler.start_timestamp + 24 * static_cast<std::int64_t>(day_of(rng));
    ChargingSession s;
    s.session_id = "S" + std::to_string(i);
    s.rate_kw = sampler.rate_kw;
    s.arrival = midnight + arrivals(rng);
    s.departure = midnight + departures(rng);
    if (s.departure <= s.arrival) s.departure += 24;
    switch (d.kind) {
      case DemandDistribution::Kind::Empirical:
        s.demand_kwh = d.values[std::uniform_int_distribution<std::size_t>(0, d.values.size() - 1)(rng)];
        break;
      case DemandDistribution::Kind::Uniform:
        s.demand_kwh = std::uniform_real_distribution<double>(d.values[0], d.values[1])(rng);
        break;
      case DemandDistribution::Kind::Normal:
        s.demand_kwh = std::max(0.0, std::normal_distribution<double>(d.values[0], d.values[1])(rng));
        break;
    }
    s.demand_kwh = std::min(s.demand_kwh, s.rate_kw * static_cast<double>(s.window()));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ChargingSession> parse_sessions(const std::string& text, const std::string& source) {
  const auto table = csv::parse(text, source);
  if (table.header != std::vector<std::string>{"session_id", "arrival", "departure", "demand_kwh", "rate_kw"})
    throw Error(ErrorCode::MalformedRow, source + ": expected header 'session_id,arrival,departure,demand_kwh,rate_kw'");
  std::vector<ChargingSession> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = source + ":" + std::to_string(table.lines[r]);
    ChargingSession s{row[0], parse_timestamp(row[1], ctx), parse_timestamp(row[2], ctx), csv::parse_double(row[3], ctx),
                      csv::parse_double(row[4], ctx)};
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_sessions(const std::vector<ChargingSession>& sessions) {
  std::ostringstream out;
  out << "session_id,arrival,departure,demand_kwh,rate_kw\n";
  for (const auto& s : sessions)
    out << s.session_id << ',' << s.arrival << ',' << s.departure << ',' << csv::format_double(s.demand_kwh) << ','
        << csv::format_double(s.rate_kw) << '\n';
  return out.str();
}

}  // namespace hp
