#include "qtlab/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qtlab/errors.hpp"

namespace qtlab {

void validate(const SimConfig& config) {
    if (config.fee_rate < 0.0) throw validation_error("sim: fee_rate must be >= 0");
    if (config.slippage < 0.0) throw validation_error("sim: slippage must be >= 0");
    if (config.initial_cash <= 0.0) throw validation_error("sim: initial_cash must be > 0");
    if (config.contract_multiplier <= 0.0)
        throw validation_error("sim: contract_multiplier must be > 0");
    if (config.margin_rate < 0.0) throw validation_error("sim: margin_rate must be >= 0");
    if (config.loss_termination <= 0.0 || config.loss_termination > 1.0)
        throw validation_error("sim: loss_termination must be in (0, 1]");
    if (config.reward_window < 2) throw validation_error("sim: reward_window must be >= 2");
    if (config.lookback < 1) throw validation_error("sim: lookback must be >= 1");
    if (config.bars_per_day < 1) throw validation_error("sim: bars_per_day must be >= 1");
}

TradingEnv::TradingEnv(const PriceSeries& series, const SimConfig& config,
                       const DualThrustParams& dt_params)
    : series_(&series), config_(config), dt_params_(dt_params) {
    validate(config_);
    validate(dt_params_);
    validate_series(series);
}

int TradingEnv::warmup_bars(const SimConfig& config, const DualThrustParams& dt_params) {
    const int nd = config.bars_per_day;
    const int need = std::max(config.lookback, dt_params.n * nd);
    return ((need + nd - 1) / nd) * nd;  // round up to a day boundary
}

double TradingEnv::equity_at(double mark_price) const {
    if (account_.position == 0) return account_.cash;
    return account_.cash + account_.position * (mark_price - account_.entry_price) *
                               config_.contract_multiplier;
}

void TradingEnv::start_day(int start_bar) {
    const int nd = config_.bars_per_day;
    const int len = static_cast<int>(series_->size());
    if (start_bar % nd != 0)
        throw contract_error("start bar " + std::to_string(start_bar) +
                             " not aligned to a day boundary (bars_per_day=" +
                             std::to_string(nd) + ")");
    const int warmup = warmup_bars(config_, dt_params_);
    if (start_bar < warmup)
        throw contract_error("start bar " + std::to_string(start_bar) +
                             " inside warm-up; first usable bar is " + std::to_string(warmup));
    if (start_bar >= len)
        throw contract_error("start bar " + std::to_string(start_bar) + " beyond series end");

    day_start_ = start_bar;
    day_end_ = std::min(start_bar + nd, len);
    bar_ = start_bar;

    // pooled aggregates of the past n full days set the day's lines
    std::vector<DayAggregate> history;
    history.reserve(static_cast<std::size_t>(dt_params_.n));
    for (int d = dt_params_.n; d >= 1; --d) {
        const int day_begin = start_bar - d * nd;
        history.push_back(day_aggregate(
            std::span<const Bar>(series_->bars.data() + day_begin, static_cast<std::size_t>(nd))));
    }
    lines_ = dual_thrust_lines(history, series_->bars[static_cast<std::size_t>(start_bar)].open,
                               dt_params_);

    day_start_equity_ = prev_equity_;
    done_ = false;
}

Observation TradingEnv::reset(int start_bar) {
    account_ = AccountState{};
    account_.cash = config_.initial_cash;
    account_.equity = config_.initial_cash;
    prev_equity_ = config_.initial_cash;
    rate_history_.clear();
    terminated_ = false;
    start_day(start_bar);
    return observation();
}

bool TradingEnv::begin_next_day() {
    if (terminated_) return false;
    if (!done_) throw contract_error("begin_next_day called mid-episode");
    if (day_end_ >= static_cast<int>(series_->size())) return false;
    if (day_end_ + config_.bars_per_day > static_cast<int>(series_->size()))
        return false;  // partial trailing day, skip
    start_day(day_end_);
    return true;
}

Observation TradingEnv::observation() const {
    const int n_obs = config_.lookback;
    const int t = bar_;
    Observation obs(obs_dim());
    const double divisor = series_->bars[static_cast<std::size_t>(t - 1)].close;
    for (int i = 0; i < n_obs; ++i) {
        const Bar& bar = series_->bars[static_cast<std::size_t>(t - n_obs + i)];
        obs[4 * i + 0] = bar.open / divisor;
        obs[4 * i + 1] = bar.high / divisor;
        obs[4 * i + 2] = bar.low / divisor;
        obs[4 * i + 3] = bar.close / divisor;
    }
    obs[4 * n_obs + 0] = lines_.buy_line / divisor;
    obs[4 * n_obs + 1] = lines_.sell_line / divisor;
    obs[4 * n_obs + 2] = lines_.range_val / divisor;
    obs[4 * n_obs + 3] = (prev_equity_ - day_start_equity_) / config_.initial_cash;
    obs[4 * n_obs + 4] = static_cast<double>(account_.position);
    return obs;
}

StepResult TradingEnv::step(int action) {
    if (done_) throw contract_error("step called on a finished episode");
    if (action != 1 && action != -1)
        throw contract_error("action must be +1 or -1, got " + std::to_string(action));

    const Bar& bar = series_->bars[static_cast<std::size_t>(bar_)];
    const double mult = config_.contract_multiplier;

    double fees = 0.0;
    if (action != account_.position) {
        if (account_.position != 0) {
            // close the old position at the adverse side of the open
            const double fill =
                account_.position > 0 ? bar.open - config_.slippage : bar.open + config_.slippage;
            account_.cash += account_.position * (fill - account_.entry_price) * mult;
            const double fee = config_.fee_rate * fill * mult;
            account_.cash -= fee;
            fees += fee;
            account_.position = 0;
            account_.entry_price = 0.0;
        }
        const double fill =
            action > 0 ? bar.open + config_.slippage : bar.open - config_.slippage;
        account_.position = action;
        account_.entry_price = fill;
        const double fee = config_.fee_rate * fill * mult;
        account_.cash -= fee;
        fees += fee;
    }
    account_.cumulative_fees += fees;

    const double equity_close = equity_at(bar.close);
    const double profit = equity_close - prev_equity_;
    prev_equity_ = equity_close;
    account_.equity = equity_close;

    rate_history_.push_back(profit / config_.initial_cash);
    while (static_cast<int>(rate_history_.size()) > config_.reward_window)
        rate_history_.pop_front();

    double reward = 0.0;
    if (rate_history_.size() >= 2) {
        double mean = 0.0;
        for (double r : rate_history_) mean += r;
        mean /= static_cast<double>(rate_history_.size());
        double var = 0.0;
        for (double r : rate_history_) var += (r - mean) * (r - mean);
        var /= static_cast<double>(rate_history_.size());
        const double stddev = std::max(std::sqrt(var), 1e-8);
        reward = mean / stddev;
    }

    ++bar_;

    StepResult result;
    result.reward = reward;
    result.account_profit = profit;
    result.equity = equity_close;
    result.position = account_.position;
    result.fees_paid = fees;

    const bool day_over = bar_ >= day_end_;
    const bool ruined =
        equity_close <= (1.0 - config_.loss_termination) * config_.initial_cash;
    const bool margin_depleted =
        account_.cash < config_.margin_rate * bar.close * mult;
    if (ruined || margin_depleted) terminated_ = true;
    done_ = day_over || terminated_;
    result.done = done_;
    if (!done_) result.observation = observation();
    return result;
}

std::pair<Eigen::Vector2d, int> DualThrustPolicy::act(const Observation& obs) {
    const int n = (static_cast<int>(obs.size()) - 5) / 4;
    IndicatorVector lines;
    lines.buy_line = obs[4 * n + 0];
    lines.sell_line = obs[4 * n + 1];
    lines.range_val = obs[4 * n + 2];
    const int held = static_cast<int>(obs[4 * n + 4]);
    const int signal = dual_thrust_signal(1.0, lines, held);
    const int sign = signal != 0 ? signal : 1;
    Eigen::Vector2d probs = sign > 0 ? Eigen::Vector2d{1.0, 0.0} : Eigen::Vector2d{0.0, 1.0};
    return {probs, sign};
}

RunResult run_policy(const PriceSeries& series, Policy& policy, const SimConfig& config,
                     const DualThrustParams& dt_params, RewardKind reward_kind) {
    TradingEnv env(series, config, dt_params);
    const int start = TradingEnv::warmup_bars(config, dt_params);
    if (start + config.bars_per_day > static_cast<int>(series.size())) {
        std::ostringstream oss;
        oss << "series too short: " << series.size() << " bars, need at least "
            << start + config.bars_per_day << " (" << dt_params.n
            << " warm-up days plus one trading day of " << config.bars_per_day << " bars)";
        throw validation_error(oss.str());
    }

    RunResult result;
    Observation obs = env.reset(start);
    result.equity_curve.push_back(EquityPoint{
        start - 1, series.bars[static_cast<std::size_t>(start - 1)].timestamp,
        config.initial_cash, 0, 0.0});

    bool more_days = true;
    while (more_days) {
        policy.on_episode_start();
        Episode episode;
        std::vector<double> day_opens;
        while (!env.done()) {
            const int bar_idx = env.current_bar();
            day_opens.push_back(series.bars[static_cast<std::size_t>(bar_idx)].open);
            auto [probs, sign] = policy.act(obs);
            StepResult sr = env.step(sign);
            EpisodeStep step;
            step.obs = std::move(obs);
            step.action_probs = probs;
            step.action_sign = sign;
            step.reward = reward_kind == RewardKind::sharpe
                              ? sr.reward
                              : sr.account_profit / config.initial_cash;
            episode.steps.push_back(std::move(step));
            result.equity_curve.push_back(
                EquityPoint{bar_idx, series.bars[static_cast<std::size_t>(bar_idx)].timestamp,
                            sr.equity, sr.position, sr.reward});
            obs = std::move(sr.observation);
        }
        episode.expert_labels =
            hindsight_expert(std::span<const double>(day_opens.data(), day_opens.size()));
        result.episodes.push_back(std::move(episode));

        more_days = env.begin_next_day();
        if (more_days) obs = env.observation();
    }
    result.final_account = env.account();
    result.terminated = env.terminated();
    return result;
}

void write_equity_csv(const std::vector<EquityPoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "bar_index,timestamp,equity,position,reward\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.equity);
        out << p.bar_index << ',' << p.timestamp << ',' << buf << ',' << p.position << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", p.reward);
        out << buf << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace qtlab
