#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qtlab/agent.hpp"
#include "qtlab/indicators.hpp"
#include "qtlab/market_data.hpp"
#include "qtlab/metrics.hpp"
#include "qtlab/replay.hpp"
#include "qtlab/simulator.hpp"

namespace py = pybind11;
using namespace qtlab;

namespace {

std::vector<double> closes_of(const PriceSeries& series) {
    std::vector<double> out;
    out.reserve(series.size());
    for (const auto& bar : series.bars) out.push_back(bar.close);
    return out;
}

py::dict metrics_dict(const MetricsReport& report) {
    py::dict d;
    d["tr"] = report.tr;
    d["sr"] = report.sr ? py::object(py::float_(*report.sr)) : py::none();
    d["vol"] = report.vol;
    d["mdd"] = report.mdd;
    d["sr_per_bar"] =
        report.sr_per_bar ? py::object(py::float_(*report.sr_per_bar)) : py::none();
    d["vol_per_bar"] = report.vol_per_bar;
    return d;
}

std::unique_ptr<Policy> named_policy(const std::string& name, const QTAgent* agent) {
    if (name == "long-hold") return std::make_unique<AlwaysLongPolicy>();
    if (name == "short-hold") return std::make_unique<AlwaysShortPolicy>();
    if (name == "dual-thrust") return std::make_unique<DualThrustPolicy>();
    if (name == "agent" && agent) return std::make_unique<AgentPolicy>(*agent);
    throw config_error("unknown policy '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "qtlab: minute-bar trading simulator, Dual Thrust demonstrations and a "
              "recurrent policy-gradient agent";

    py::register_exception<error>(m, "QtlabError");

    py::class_<Bar>(m, "Bar")
        .def(py::init<>())
        .def_readwrite("timestamp", &Bar::timestamp)
        .def_readwrite("open", &Bar::open)
        .def_readwrite("high", &Bar::high)
        .def_readwrite("low", &Bar::low)
        .def_readwrite("close", &Bar::close)
        .def("__repr__", [](const Bar& b) {
            return "Bar(t=" + std::to_string(b.timestamp) + ", c=" + std::to_string(b.close) +
                   ")";
        });

    py::class_<PriceSeries>(m, "PriceSeries")
        .def(py::init<>())
        .def_readwrite("bars", &PriceSeries::bars)
        .def_readwrite("instrument_id", &PriceSeries::instrument_id)
        .def("__len__", &PriceSeries::size)
        .def("closes", &closes_of);

    py::class_<SynthParams>(m, "SynthParams")
        .def(py::init<>())
        .def_readwrite("base", &SynthParams::base)
        .def_readwrite("amplitude", &SynthParams::amplitude)
        .def_readwrite("period", &SynthParams::period)
        .def_readwrite("drift", &SynthParams::drift)
        .def_readwrite("noise", &SynthParams::noise);

    m.def("load_csv",
          [](const std::string& path, bool strict_gaps) {
              return load_csv(path, LoadOptions{strict_gaps});
          },
          py::arg("path"), py::arg("strict_gaps") = false);
    m.def("write_csv", &write_csv, py::arg("series"), py::arg("path"));
    m.def("synth_series",
          [](const std::string& kind, int length, std::uint64_t seed, const SynthParams& params) {
              return synth_series(synth_kind_from_string(kind), length, seed, params);
          },
          py::arg("kind"), py::arg("length"), py::arg("seed"), py::arg("params") = SynthParams{});

    py::class_<DualThrustParams>(m, "DualThrustParams")
        .def(py::init<>())
        .def(py::init([](int n, double k1, double k2) {
                 return DualThrustParams{n, k1, k2};
             }),
             py::arg("n") = 5, py::arg("k1") = 0.5, py::arg("k2") = 0.5)
        .def_readwrite("n", &DualThrustParams::n)
        .def_readwrite("k1", &DualThrustParams::k1)
        .def_readwrite("k2", &DualThrustParams::k2);

    py::class_<DayAggregate>(m, "DayAggregate")
        .def(py::init([](double hh, double lc, double hc, double ll) {
                 return DayAggregate{hh, lc, hc, ll};
             }),
             py::arg("highest_high"), py::arg("lowest_close"), py::arg("highest_close"),
             py::arg("lowest_low"))
        .def_readwrite("highest_high", &DayAggregate::highest_high)
        .def_readwrite("lowest_close", &DayAggregate::lowest_close)
        .def_readwrite("highest_close", &DayAggregate::highest_close)
        .def_readwrite("lowest_low", &DayAggregate::lowest_low);

    py::class_<IndicatorVector>(m, "IndicatorVector")
        .def(py::init<>())
        .def_readwrite("buy_line", &IndicatorVector::buy_line)
        .def_readwrite("sell_line", &IndicatorVector::sell_line)
        .def_readwrite("range_val", &IndicatorVector::range_val);

    m.def("dual_thrust_lines",
          [](const std::vector<DayAggregate>& history, double day_open,
             const DualThrustParams& params) {
              return dual_thrust_lines(history, day_open, params);
          },
          py::arg("history"), py::arg("day_open"), py::arg("params"));
    m.def("dual_thrust_signal", &dual_thrust_signal, py::arg("current_price"), py::arg("lines"),
          py::arg("held_position"));
    m.def("hindsight_expert",
          [](const std::vector<double>& opens) {
              return hindsight_expert(std::span<const double>(opens.data(), opens.size()));
          },
          py::arg("day_opens"));

    py::class_<EpisodeStep>(m, "EpisodeStep")
        .def_readonly("obs", &EpisodeStep::obs)
        .def_readonly("action_probs", &EpisodeStep::action_probs)
        .def_readonly("action_sign", &EpisodeStep::action_sign)
        .def_readonly("reward", &EpisodeStep::reward);

    py::class_<Episode>(m, "Episode")
        .def_readonly("steps", &Episode::steps)
        .def_readonly("expert_labels", &Episode::expert_labels)
        .def_readonly("is_demo", &Episode::is_demo)
        .def_readonly("priority", &Episode::priority)
        .def_readonly("id", &Episode::id)
        .def("__len__", &Episode::length)
        .def("actions", [](const Episode& ep) {
            std::vector<int> signs;
            for (const auto& s : ep.steps) signs.push_back(s.action_sign);
            return signs;
        });

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("fee_rate", &SimConfig::fee_rate)
        .def_readwrite("slippage", &SimConfig::slippage)
        .def_readwrite("initial_cash", &SimConfig::initial_cash)
        .def_readwrite("contract_multiplier", &SimConfig::contract_multiplier)
        .def_readwrite("margin_rate", &SimConfig::margin_rate)
        .def_readwrite("loss_termination", &SimConfig::loss_termination)
        .def_readwrite("reward_window", &SimConfig::reward_window)
        .def_readwrite("lookback", &SimConfig::lookback)
        .def_readwrite("bars_per_day", &SimConfig::bars_per_day);

    py::class_<AccountState>(m, "AccountState")
        .def_readonly("cash", &AccountState::cash)
        .def_readonly("position", &AccountState::position)
        .def_readonly("entry_price", &AccountState::entry_price)
        .def_readonly("equity", &AccountState::equity)
        .def_readonly("cumulative_fees", &AccountState::cumulative_fees);

    py::class_<StepResult>(m, "StepResult")
        .def_readonly("observation", &StepResult::observation)
        .def_readonly("reward", &StepResult::reward)
        .def_readonly("account_profit", &StepResult::account_profit)
        .def_readonly("done", &StepResult::done)
        .def_readonly("equity", &StepResult::equity)
        .def_readonly("position", &StepResult::position)
        .def_readonly("fees_paid", &StepResult::fees_paid);

    py::class_<TradingEnv>(m, "TradingEnv")
        .def(py::init<const PriceSeries&, const SimConfig&, const DualThrustParams&>(),
             py::arg("series"), py::arg("config"), py::arg("dt_params"),
             py::keep_alive<1, 2>())
        .def_static("warmup_bars", &TradingEnv::warmup_bars, py::arg("config"),
                    py::arg("dt_params"))
        .def("obs_dim", &TradingEnv::obs_dim)
        .def("reset", &TradingEnv::reset, py::arg("start_bar"))
        .def("begin_next_day", &TradingEnv::begin_next_day)
        .def("step", &TradingEnv::step, py::arg("action"))
        .def("done", &TradingEnv::done)
        .def("terminated", &TradingEnv::terminated)
        .def("current_bar", &TradingEnv::current_bar)
        .def("account", &TradingEnv::account, py::return_value_policy::copy)
        .def("observation", &TradingEnv::observation);

    m.def("generate_demonstrations",
          [](const PriceSeries& series, const DualThrustParams& params, const SimConfig& sim,
             const std::string& reward) {
              return generate_demonstrations(series, params, sim,
                                             reward_kind_from_string(reward));
          },
          py::arg("series"), py::arg("params"), py::arg("sim_config"),
          py::arg("reward") = "sharpe");

    m.def("run_baseline",
          [](const PriceSeries& series, const std::string& policy_name, const SimConfig& sim,
             const DualThrustParams& dt, const std::string& reward) {
              auto policy = named_policy(policy_name, nullptr);
              const auto run =
                  run_policy(series, *policy, sim, dt, reward_kind_from_string(reward));
              std::vector<double> equity;
              for (const auto& p : run.equity_curve) equity.push_back(p.equity);
              py::dict out;
              out["metrics"] = metrics_dict(compute_metrics(equity, sim.bars_per_day));
              out["equity"] = equity;
              out["episodes"] = run.episodes.size();
              out["terminated"] = run.terminated;
              return out;
          },
          py::arg("series"), py::arg("policy"), py::arg("sim_config"), py::arg("dt_params"),
          py::arg("reward") = "sharpe");

    m.def("total_return",
          [](const std::vector<double>& e) { return total_return(e); });
    m.def("sharpe", [](const std::vector<double>& r) { return sharpe(r); });
    m.def("volatility", [](const std::vector<double>& r) { return volatility(r); });
    m.def("max_drawdown", [](const std::vector<double>& e) { return max_drawdown(e); });
    m.def("compute_metrics",
          [](const std::vector<double>& equity, int bars_per_day) {
              return metrics_dict(compute_metrics(equity, bars_per_day));
          },
          py::arg("equity"), py::arg("bars_per_day"));

    py::class_<BufferConfig>(m, "BufferConfig")
        .def(py::init<>())
        .def_readwrite("capacity", &BufferConfig::capacity)
        .def_readwrite("demo_bonus", &BufferConfig::demo_bonus)
        .def_readwrite("priority_floor", &BufferConfig::priority_floor)
        .def_readwrite("lambda0", &BufferConfig::lambda0)
        .def_readwrite("phi", &BufferConfig::phi)
        .def_readwrite("demo_protected", &BufferConfig::demo_protected);

    py::class_<PrioritizedBuffer>(m, "PrioritizedBuffer")
        .def(py::init<const BufferConfig&>(), py::arg("config") = BufferConfig{})
        .def("add", &PrioritizedBuffer::add, py::arg("episode"))
        .def("sample",
             [](const PrioritizedBuffer& buffer, int batch_size, std::uint64_t seed,
                bool demos_only) {
                 std::mt19937_64 rng(seed);
                 const auto batch = buffer.sample(batch_size, rng, demos_only);
                 std::vector<py::dict> out;
                 for (const auto& s : batch) {
                     py::dict d;
                     d["id"] = s.episode->id;
                     d["probability"] = s.probability;
                     d["weight"] = s.weight;
                     out.push_back(d);
                 }
                 return out;
             },
             py::arg("batch_size"), py::arg("seed"), py::arg("demos_only") = false)
        .def("update_priority", &PrioritizedBuffer::update_priority, py::arg("id"),
             py::arg("critic_loss_term"), py::arg("actor_grad_norm"), py::arg("is_demo"))
        .def("probabilities", &PrioritizedBuffer::probabilities)
        .def("__len__", &PrioritizedBuffer::size)
        .def("demo_count", &PrioritizedBuffer::demo_count)
        .def("set_phi", &PrioritizedBuffer::set_phi)
        .def("save", &PrioritizedBuffer::save, py::arg("path"))
        .def_static("load", &PrioritizedBuffer::load, py::arg("path"),
                    py::arg("config") = BufferConfig{});

    py::class_<NetConfig>(m, "NetConfig")
        .def(py::init([](const std::string& cell, int obs_dim, int hidden_dim,
                         int critic_hidden) {
                 return NetConfig{cell_kind_from_string(cell), obs_dim, hidden_dim,
                                  critic_hidden};
             }),
             py::arg("cell") = "gru", py::arg("obs_dim") = 1, py::arg("hidden_dim") = 32,
             py::arg("critic_hidden") = 32)
        .def_readwrite("obs_dim", &NetConfig::obs_dim)
        .def_readwrite("hidden_dim", &NetConfig::hidden_dim)
        .def_readwrite("critic_hidden", &NetConfig::critic_hidden);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("lr_actor", &TrainConfig::lr_actor)
        .def_readwrite("lr_critic", &TrainConfig::lr_critic)
        .def_readwrite("lambda1", &TrainConfig::lambda1)
        .def_readwrite("lambda2", &TrainConfig::lambda2)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("pretrain_steps", &TrainConfig::pretrain_steps)
        .def_readwrite("demo_fraction", &TrainConfig::demo_fraction)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
        .def_readwrite("critic_hidden", &TrainConfig::critic_hidden)
        .def_readwrite("grad_clip", &TrainConfig::grad_clip)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("updates_per_rollout", &TrainConfig::updates_per_rollout);

    py::class_<QTAgent>(m, "QTAgent")
        .def(py::init<const NetConfig&, std::uint64_t>(), py::arg("net_config"), py::arg("seed"))
        .def("train_steps", &QTAgent::train_steps)
        .def("save", &QTAgent::save, py::arg("path"))
        .def_static("load", &QTAgent::load, py::arg("path"))
        .def("act_greedy", [](const QTAgent& agent, const Episode& episode) {
            const auto fwd = agent.actor().forward_episode(episode);
            std::vector<int> signs;
            for (const auto& p : fwd.probs) signs.push_back(QTAgent::action_sign(p));
            return signs;
        });

    m.def("train_step",
          [](QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config,
             std::uint64_t seed, bool demos_only) {
              std::mt19937_64 rng(seed);
              const auto stats = train_step(agent, buffer, config, rng, demos_only);
              py::dict d;
              d["step"] = stats.step;
              d["critic_loss"] = stats.critic_loss;
              d["actor_obj"] = stats.actor_objective;
              d["bc_loss"] = stats.bc_loss;
              d["grad_norm"] = stats.actor_grad_norm;
              d["bc_active_fraction"] = stats.bc_active_fraction;
              return d;
          },
          py::arg("agent"), py::arg("buffer"), py::arg("config"), py::arg("seed"),
          py::arg("demos_only") = false);

    m.def("pretrain",
          [](QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config, int steps,
             std::uint64_t seed) {
              std::mt19937_64 rng(seed);
              pretrain(agent, buffer, config, steps, rng);
          },
          py::arg("agent"), py::arg("buffer"), py::arg("config"), py::arg("steps"),
          py::arg("seed"));

    m.def("action_agreement",
          [](const QTAgent& agent, const std::vector<Episode>& episodes) {
              return action_agreement(agent,
                                      std::span<const Episode>(episodes.data(), episodes.size()));
          },
          py::arg("agent"), py::arg("episodes"));

    m.attr("__version__") = "0.1.0";
}
