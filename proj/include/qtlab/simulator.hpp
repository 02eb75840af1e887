#pragma once
#include <Eigen/Core>
#include <deque>
#include <memory>
#include <utility>
#include <vector>

#include "qtlab/episode.hpp"
#include "qtlab/indicators.hpp"
#include "qtlab/market_data.hpp"

namespace qtlab {

struct SimConfig {
    double fee_rate = 2e-5;             // delta, fraction of trade notional
    double slippage = 0.15;             // zeta, index points per executed fill
    double initial_cash = 1'000'000.0;  // currency
    double contract_multiplier = 1.0;   // currency per index point
    double margin_rate = 0.1;           // required margin as fraction of notional
    double loss_termination = 0.5;      // terminate once this fraction of initial cash is lost
    int reward_window = 60;             // W, bars in the rolling Sharpe reward
    int lookback = 30;                  // n_obs, bars in the observation price window
    int bars_per_day = 240;             // nd
};

void validate(const SimConfig& config);

struct AccountState {
    double cash = 0.0;
    int position = 0;          // contracts, +1/-1/0
    double entry_price = 0.0;  // fill price of the open position
    double equity = 0.0;
    double cumulative_fees = 0.0;
};

struct StepResult {
    Observation observation;     // next observation; empty when done
    double reward = 0.0;         // rolling Sharpe of recent per-step return rates
    double account_profit = 0.0; // r_t, currency
    bool done = false;
    double equity = 0.0;
    int position = 0;
    double fees_paid = 0.0;  // fees charged this step
};

// Minute-bar trading environment. Orders fill at the bar open with adverse
// slippage; profits mark at the bar close. Episodes end at day boundaries or
// on loss/margin termination. One contract, actions +1 (long) / -1 (short).
class TradingEnv {
public:
    TradingEnv(const PriceSeries& series, const SimConfig& config,
               const DualThrustParams& dt_params);

    // First day-aligned bar with enough history for observations and lines.
    static int warmup_bars(const SimConfig& config, const DualThrustParams& dt_params);

    int obs_dim() const { return 4 * config_.lookback + 5; }

    // Fresh account (cash = initial_cash, flat) starting a day at start_bar.
    Observation reset(int start_bar);

    // Continue the same account into the next day; false when out of data or
    // the run was terminated by loss/margin.
    bool begin_next_day();

    StepResult step(int action);

    bool done() const { return done_; }
    bool terminated() const { return terminated_; }  // loss/margin, run over
    int current_bar() const { return bar_; }
    int day_start_bar() const { return day_start_; }
    const AccountState& account() const { return account_; }
    const IndicatorVector& day_lines() const { return lines_; }
    const SimConfig& config() const { return config_; }
    const PriceSeries& series() const { return *series_; }

    Observation observation() const;  // at the current bar

private:
    void start_day(int start_bar);
    double equity_at(double mark_price) const;

    const PriceSeries* series_;
    SimConfig config_;
    DualThrustParams dt_params_;

    AccountState account_;
    int bar_ = 0;       // next bar to step
    int day_start_ = 0;
    int day_end_ = 0;   // one past the last bar of the current day
    double prev_equity_ = 0.0;
    double day_start_equity_ = 0.0;
    IndicatorVector lines_;
    std::deque<double> rate_history_;  // per-step return rates, last W
    bool done_ = true;
    bool terminated_ = false;
};

// Observation-driven trading rule. Recurrent policies reset state per episode.
struct Policy {
    virtual ~Policy() = default;
    virtual void on_episode_start() {}
    // returns (probability vector over {long, short}, executed sign)
    virtual std::pair<Eigen::Vector2d, int> act(const Observation& obs) = 0;
};

// Dual Thrust over the normalized observation: the current price is the
// window's last close (= 1 after normalization) and the lines sit at the
// indicator slots. Holds map to the previous position, +1 while still flat.
struct DualThrustPolicy : Policy {
    std::pair<Eigen::Vector2d, int> act(const Observation& obs) override;
};

struct AlwaysLongPolicy : Policy {
    std::pair<Eigen::Vector2d, int> act(const Observation&) override {
        return {Eigen::Vector2d{1.0, 0.0}, 1};
    }
};

struct AlwaysShortPolicy : Policy {
    std::pair<Eigen::Vector2d, int> act(const Observation&) override {
        return {Eigen::Vector2d{0.0, 1.0}, -1};
    }
};

struct EquityPoint {
    int bar_index = 0;
    std::int64_t timestamp = 0;
    double equity = 0.0;
    int position = 0;
    double reward = 0.0;
};

struct RunResult {
    std::vector<Episode> episodes;       // one per trading day
    std::vector<EquityPoint> equity_curve;  // initial point plus one per stepped bar
    AccountState final_account;
    bool terminated = false;  // run stopped early by loss/margin termination
};

// Backtest driver: iterates day by day from the first day after warm-up,
// carrying the account across days. Episode rewards follow reward_kind
// (rolling Sharpe or raw per-step return rate). Hindsight expert labels are
// attached to every completed day.
RunResult run_policy(const PriceSeries& series, Policy& policy, const SimConfig& config,
                     const DualThrustParams& dt_params,
                     RewardKind reward_kind = RewardKind::sharpe);

void write_equity_csv(const std::vector<EquityPoint>& curve, const std::string& path);

}  // namespace qtlab
