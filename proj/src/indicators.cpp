#include "qtlab/indicators.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "qtlab/episode.hpp"
#include "qtlab/errors.hpp"
#include "qtlab/simulator.hpp"

namespace qtlab {

void validate(const DualThrustParams& params) {
    if (params.n < 1) throw validation_error("dual thrust: n must be >= 1");
    if (params.k1 < 0.0 || params.k2 < 0.0)
        throw validation_error("dual thrust: k1 and k2 must be non-negative");
}

DayAggregate day_aggregate(std::span<const Bar> day_bars) {
    if (day_bars.empty()) throw contract_error("day_aggregate: no bars");
    DayAggregate agg;
    agg.highest_high = -std::numeric_limits<double>::infinity();
    agg.highest_close = -std::numeric_limits<double>::infinity();
    agg.lowest_close = std::numeric_limits<double>::infinity();
    agg.lowest_low = std::numeric_limits<double>::infinity();
    for (const auto& bar : day_bars) {
        agg.highest_high = std::max(agg.highest_high, bar.high);
        agg.highest_close = std::max(agg.highest_close, bar.close);
        agg.lowest_close = std::min(agg.lowest_close, bar.close);
        agg.lowest_low = std::min(agg.lowest_low, bar.low);
    }
    return agg;
}

IndicatorVector dual_thrust_lines(std::span<const DayAggregate> history, double day_open,
                                  const DualThrustParams& params) {
    validate(params);
    if (history.empty()) throw contract_error("dual_thrust_lines: empty history");

    double hh = -std::numeric_limits<double>::infinity();
    double hc = -std::numeric_limits<double>::infinity();
    double lc = std::numeric_limits<double>::infinity();
    double ll = std::numeric_limits<double>::infinity();
    for (const auto& day : history) {
        hh = std::max(hh, day.highest_high);
        hc = std::max(hc, day.highest_close);
        lc = std::min(lc, day.lowest_close);
        ll = std::min(ll, day.lowest_low);
    }

    IndicatorVector lines;
    lines.range_val = std::max(hh - lc, hc - ll);
    lines.buy_line = day_open + params.k1 * lines.range_val;
    lines.sell_line = day_open - params.k2 * lines.range_val;
    return lines;
}

int dual_thrust_signal(double current_price, const IndicatorVector& lines, int held_position) {
    if (current_price > lines.buy_line) return 1;
    if (current_price < lines.sell_line) return -1;
    return held_position;
}

std::map<int, int> hindsight_expert(std::span<const double> day_opens) {
    if (day_opens.empty()) throw contract_error("hindsight_expert: empty day");
    int min_idx = 0;
    int max_idx = 0;
    for (int i = 1; i < static_cast<int>(day_opens.size()); ++i) {
        if (day_opens[i] < day_opens[min_idx]) min_idx = i;
        if (day_opens[i] > day_opens[max_idx]) max_idx = i;
    }
    std::map<int, int> labels;
    if (min_idx == max_idx) return labels;  // flat day, labels dropped
    labels[min_idx] = 1;
    labels[max_idx] = -1;
    return labels;
}

std::vector<Episode> generate_demonstrations(const PriceSeries& series,
                                             const DualThrustParams& params,
                                             const SimConfig& sim_config,
                                             RewardKind reward_kind) {
    validate(params);
    DualThrustPolicy policy;
    RunResult run = run_policy(series, policy, sim_config, params, reward_kind);
    if (run.episodes.empty()) throw validation_error("no trading days after warm-up");
    for (auto& episode : run.episodes) episode.is_demo = true;
    return std::move(run.episodes);
}

std::vector<Episode> generate_demonstrations(const PriceSeries& series,
                                             const DualThrustParams& params,
                                             const SimConfig& sim_config) {
    return generate_demonstrations(series, params, sim_config, RewardKind::sharpe);
}

}  // namespace qtlab
