#pragma once
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtlab {

// Per-period fractional changes of an equity curve.
std::vector<double> period_returns(std::span<const double> equity);

// (last - first) / first. Requires >= 2 points.
double total_return(std::span<const double> equity);

// mean / population-std of returns. Throws validation_error("undefined Sharpe")
// when the returns are (numerically) constant.
double sharpe(std::span<const double> returns);

// Population standard deviation of returns. Requires >= 2 values.
double volatility(std::span<const double> returns);

// max over i<j of (P_i - P_j)/P_i, floored at 0. Single pass over the curve.
double max_drawdown(std::span<const double> equity);

// The four headline statistics. Sr/Vol use per-day returns (one equity sample
// per bars_per_day) when day sampling is possible, per-bar otherwise; Tr and
// Mdd always use the full curve. Per-bar Sr/Vol are reported alongside.
struct MetricsReport {
    double tr = 0.0;
    std::optional<double> sr;  // empty when Sharpe is undefined (zero variance)
    double vol = 0.0;
    double mdd = 0.0;
    std::optional<double> sr_per_bar;
    double vol_per_bar = 0.0;
};

MetricsReport compute_metrics(std::span<const double> equity, int bars_per_day);

// JSON object {"method":..., "tr":..., "sr":..., "vol":..., "mdd":..., ...}.
std::string metrics_to_json(const MetricsReport& report, const std::string& method);

}  // namespace qtlab
