#pragma once
#include <map>
#include <span>
#include <vector>

#include "qtlab/market_data.hpp"

namespace qtlab {

struct SimConfig;
struct Episode;
enum class RewardKind;

struct DualThrustParams {
    int n = 5;        // lookback, trading days
    double k1 = 0.5;  // buy-line breakout coefficient
    double k2 = 0.5;  // sell-line breakout coefficient
};

void validate(const DualThrustParams& params);

// Per-day extremes feeding the Range computation.
struct DayAggregate {
    double highest_high = 0.0;
    double lowest_close = 0.0;
    double highest_close = 0.0;
    double lowest_low = 0.0;
};

DayAggregate day_aggregate(std::span<const Bar> day_bars);

struct IndicatorVector {
    double buy_line = 0.0;
    double sell_line = 0.0;
    double range_val = 0.0;
};

// Range = max(HH - LC, HC - LL) pooled over the past n days;
// BuyLine = open + k1 * Range, SellLine = open - k2 * Range.
IndicatorVector dual_thrust_lines(std::span<const DayAggregate> history, double day_open,
                                  const DualThrustParams& params);

// +1 when price breaks the buy line, -1 when it breaks the sell line,
// otherwise the held position unchanged (0 when still flat).
int dual_thrust_signal(double current_price, const IndicatorVector& lines, int held_position);

// Expert labels for one trading day: +1 at the argmin open, -1 at the argmax
// open (earliest index on ties). A day whose argmin and argmax coincide gets
// no labels at all.
std::map<int, int> hindsight_expert(std::span<const double> day_opens);

// Runs the trading simulator with the Dual Thrust policy over every full day
// after warm-up; one Episode per day, flagged as demonstration, expert labels
// attached. `reward` selects which per-step scalar lands in Episode steps.
std::vector<Episode> generate_demonstrations(const PriceSeries& series,
                                             const DualThrustParams& params,
                                             const SimConfig& sim_config,
                                             RewardKind reward_kind);

std::vector<Episode> generate_demonstrations(const PriceSeries& series,
                                             const DualThrustParams& params,
                                             const SimConfig& sim_config);

}  // namespace qtlab
