#include "qtlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "qtlab/errors.hpp"

namespace qtlab {

std::vector<double> period_returns(std::span<const double> equity) {
    if (equity.size() < 2) throw validation_error("returns need at least 2 equity points");
    std::vector<double> out;
    out.reserve(equity.size() - 1);
    for (std::size_t i = 1; i < equity.size(); ++i) {
        if (equity[i - 1] <= 0.0) throw validation_error("equity must stay positive");
        out.push_back((equity[i] - equity[i - 1]) / equity[i - 1]);
    }
    return out;
}

double total_return(std::span<const double> equity) {
    if (equity.size() < 2) throw validation_error("total_return needs at least 2 points");
    return (equity.back() - equity.front()) / equity.front();
}

double volatility(std::span<const double> returns) {
    if (returns.size() < 2) throw validation_error("volatility needs at least 2 returns");
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    return std::sqrt(var);
}

double sharpe(std::span<const double> returns) {
    if (returns.size() < 2) throw validation_error("sharpe needs at least 2 returns");
    const double stddev = volatility(returns);
    if (stddev < 1e-12) throw validation_error("undefined Sharpe: constant returns");
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    return mean / stddev;
}

double max_drawdown(std::span<const double> equity) {
    if (equity.empty()) throw validation_error("max_drawdown needs a non-empty curve");
    double peak = equity.front();
    double worst = 0.0;
    for (double v : equity) {
        peak = std::max(peak, v);
        if (peak > 0.0) worst = std::max(worst, (peak - v) / peak);
    }
    return worst;
}

namespace {

std::vector<double> day_sampled(std::span<const double> equity, int bars_per_day) {
    // first point is the pre-trading equity; then every day close
    std::vector<double> out;
    out.push_back(equity.front());
    for (std::size_t i = static_cast<std::size_t>(bars_per_day); i < equity.size();
         i += static_cast<std::size_t>(bars_per_day))
        out.push_back(equity[i]);
    if (out.size() < 2) out.push_back(equity.back());
    return out;
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> equity, int bars_per_day) {
    if (equity.size() < 2) throw validation_error("metrics need at least 2 equity points");
    MetricsReport report;
    report.tr = total_return(equity);
    report.mdd = max_drawdown(equity);

    const auto bar_returns = period_returns(equity);
    report.vol_per_bar = volatility(bar_returns);
    try {
        report.sr_per_bar = sharpe(bar_returns);
    } catch (const validation_error&) {
        report.sr_per_bar.reset();
    }

    std::vector<double> daily =
        bars_per_day >= 1 ? day_sampled(equity, bars_per_day)
                          : std::vector<double>(equity.begin(), equity.end());
    const auto day_returns = period_returns(daily);
    report.vol = volatility(day_returns);
    try {
        report.sr = sharpe(day_returns);
    } catch (const validation_error&) {
        report.sr.reset();
    }
    return report;
}

std::string metrics_to_json(const MetricsReport& report, const std::string& method) {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["tr"] = report.tr;
    if (report.sr)
        j["sr"] = *report.sr;
    else
        j["sr"] = nullptr;
    j["vol"] = report.vol;
    j["mdd"] = report.mdd;
    if (report.sr_per_bar)
        j["sr_per_bar"] = *report.sr_per_bar;
    else
        j["sr_per_bar"] = nullptr;
    j["vol_per_bar"] = report.vol_per_bar;
    return j.dump(2) + "\n";
}

}  // namespace qtlab
