#include "qtlab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "qtlab/errors.hpp"
#include "qtlab/metrics.hpp"

#ifndef QTLAB_VERSION_STRING
#define QTLAB_VERSION_STRING "0.0.0+unknown"
#endif

namespace qtlab {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&tt, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_manifest(const RunConfig& config, const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    ordered_json j;
    j["command"] = command;
    j["version"] = QTLAB_VERSION_STRING;
    j["config_file"] = config.loaded_from;
    j["config_hash"] = config_fingerprint(config);
    j["seed"] = config.seed;
    j["ablation"] = to_string(config.ablation);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_clock_utc"] = utc_now();
    std::ofstream out(config.out_dir + "/manifest.json");
    if (!out) throw io_error("cannot write manifest in " + config.out_dir);
    out << j.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw io_error("write failed: " + path);
}

std::vector<double> equity_values(const std::vector<EquityPoint>& curve) {
    std::vector<double> values;
    values.reserve(curve.size());
    for (const auto& p : curve) values.push_back(p.equity);
    return values;
}

std::string metrics_line(const std::string& method, const MetricsReport& m) {
    char sr_text[32];
    if (m.sr)
        std::snprintf(sr_text, sizeof(sr_text), "%.3f", *m.sr);
    else
        std::snprintf(sr_text, sizeof(sr_text), "n/a");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s Tr %7.2f%%  Sr %8s  Vol %10.6f  Mdd %6.2f%%",
                  method.c_str(), m.tr * 100.0, sr_text, m.vol, m.mdd * 100.0);
    return buf;
}

}  // namespace

void cmd_demos(const RunConfig& config) {
    ensure_dir(config.out_dir);
    const PriceSeries series = load_series(config.data);
    const PriceSeries training = train_slice(series, config);

    DualThrustPolicy policy;
    RunResult run =
        run_policy(training, policy, config.sim, config.dual_thrust, config.train.reward_kind);

    PrioritizedBuffer buffer(
        BufferConfig{std::max<int>(config.buffer.capacity,
                                   static_cast<int>(run.episodes.size())),
                     config.buffer.demo_bonus, config.buffer.priority_floor,
                     config.buffer.lambda0, config.buffer.phi, config.buffer.demo_protected});
    std::size_t total_steps = 0;
    for (auto& episode : run.episodes) {
        episode.is_demo = true;
        total_steps += episode.steps.size();
        buffer.add(std::move(episode));
    }
    const std::string demo_path = config.out_dir + "/demos.qtrb";
    buffer.save(demo_path);

    const auto metrics =
        compute_metrics(equity_values(run.equity_curve), config.sim.bars_per_day);
    write_text(config.out_dir + "/demos_summary.json", [&] {
        ordered_json j = json::parse(metrics_to_json(metrics, "dual-thrust"));
        j["episodes"] = buffer.size();
        j["steps"] = total_steps;
        j["terminated"] = run.terminated;
        return j.dump(2) + "\n";
    }());
    write_equity_csv(run.equity_curve, config.out_dir + "/demos_equity.csv");
    write_manifest(config, "demos",
                   {config.data.use_synth ? "synth:" + to_string(config.data.synth_kind)
                                          : config.data.csv_path},
                   {demo_path, config.out_dir + "/demos_summary.json",
                    config.out_dir + "/demos_equity.csv"});

    std::cout << "demonstrations: " << buffer.size() << " episodes, " << total_steps
              << " steps -> " << demo_path << "\n"
              << metrics_line("dual-thrust", metrics) << "\n";
}

void cmd_train(const RunConfig& config) {
    ensure_dir(config.out_dir);
    ensure_dir(config.out_dir + "/checkpoints");
    const PriceSeries series = load_series(config.data);
    const PriceSeries training = train_slice(series, config);

    const bool wants_demos = ablation_uses_demos(config.ablation);
    if (wants_demos && config.demo_file.empty())
        throw config_error("ablation " + to_string(config.ablation) +
                           " needs demo_file (run `qtlab demos` first)");

    PrioritizedBuffer buffer = wants_demos
                                   ? PrioritizedBuffer::load(config.demo_file, config.buffer)
                                   : PrioritizedBuffer(config.buffer);
    if (wants_demos && buffer.demo_count() == 0)
        throw config_error("demo file " + config.demo_file + " holds no demonstrations");

    NetConfig net_config{config.train.cell, 4 * config.sim.lookback + 5,
                         config.train.hidden_dim, config.train.critic_hidden};
    QTAgent agent = config.resume_checkpoint.empty()
                        ? QTAgent(net_config, config.seed)
                        : QTAgent::load(config.resume_checkpoint);
    if (agent.net_config().obs_dim != net_config.obs_dim)
        throw config_error("resume checkpoint observation dim " +
                           std::to_string(agent.net_config().obs_dim) +
                           " does not match config (" + std::to_string(net_config.obs_dim) + ")");

    const std::string stats_path = config.out_dir + "/train_stats.jsonl";
    std::ofstream stats_out(stats_path, std::ios::app);
    if (!stats_out) throw io_error("cannot open " + stats_path);

    if (wants_demos && config.train.pretrain_steps > 0) {
        std::mt19937_64 pre_rng(config.seed);
        pretrain(agent, buffer, config.train, config.train.pretrain_steps, pre_rng,
                 [&](const TrainStats& s) { stats_out << to_json_line(s) << '\n'; });
    }
    stats_out.close();

    TrainOptions options;
    options.stats_path = stats_path;
    options.checkpoint_dir = config.out_dir + "/checkpoints";
    const TrainSummary summary =
        train(agent, training, buffer, config.train, config.sim, config.dual_thrust, options);

    write_text(config.out_dir + "/train_summary.json", [&] {
        ordered_json j;
        j["ablation"] = to_string(config.ablation);
        j["train_steps"] = summary.train_steps;
        j["episodes_rolled"] = summary.episodes_rolled;
        j["final_equity"] = summary.final_equity;
        j["terminated"] = summary.terminated;
        j["buffer_episodes"] = buffer.size();
        j["buffer_demos"] = buffer.demo_count();
        return j.dump(2) + "\n";
    }());
    write_manifest(config, "train", {config.demo_file},
                   {options.checkpoint_dir + "/final.ckpt", stats_path,
                    config.out_dir + "/train_summary.json"});

    std::cout << "train[" << to_string(config.ablation) << "]: " << summary.train_steps
              << " updates, " << summary.episodes_rolled << " rollout episodes, final equity "
              << summary.final_equity << (summary.terminated ? " (terminated)" : "") << "\n"
              << "checkpoint: " << options.checkpoint_dir << "/final.ckpt\n";
}

void cmd_backtest(const RunConfig& config, const std::string& checkpoint,
                  const std::string& baseline) {
    ensure_dir(config.out_dir);
    const PriceSeries series = load_series(config.data);
    const PriceSeries testing = test_slice(series, config);

    std::unique_ptr<Policy> policy;
    std::unique_ptr<QTAgent> agent;
    std::string method;
    if (!baseline.empty()) {
        if (!checkpoint.empty())
            throw config_error("give either --checkpoint or --baseline, not both");
        method = baseline;
        if (baseline == "long-hold")
            policy = std::make_unique<AlwaysLongPolicy>();
        else if (baseline == "short-hold")
            policy = std::make_unique<AlwaysShortPolicy>();
        else if (baseline == "dual-thrust")
            policy = std::make_unique<DualThrustPolicy>();
        else
            throw config_error("unknown baseline '" + baseline +
                               "' (long-hold, short-hold, dual-thrust)");
    } else {
        if (checkpoint.empty())
            throw config_error("backtest needs --checkpoint or --baseline");
        agent = std::make_unique<QTAgent>(QTAgent::load(checkpoint));
        policy = std::make_unique<AgentPolicy>(*agent);
        method = to_string(config.ablation);
    }

    RunResult run =
        run_policy(testing, *policy, config.sim, config.dual_thrust, config.train.reward_kind);
    const auto metrics =
        compute_metrics(equity_values(run.equity_curve), config.sim.bars_per_day);

    const std::string metrics_path = config.out_dir + "/backtest_" + method + "_metrics.json";
    write_text(metrics_path, metrics_to_json(metrics, method));
    const std::string equity_path = config.out_dir + "/backtest_" + method + "_equity.csv";
    write_equity_csv(run.equity_curve, equity_path);
    write_manifest(config, "backtest", {checkpoint.empty() ? baseline : checkpoint},
                   {metrics_path, equity_path});

    std::cout << metrics_line(method, metrics) << "\n";
}

void cmd_compare(const std::vector<std::string>& result_files, const std::string& out_dir) {
    if (result_files.empty()) throw config_error("compare needs at least one result file");
    ensure_dir(out_dir);

    struct Row {
        std::string method;
        double tr, vol, mdd;
        std::optional<double> sr;
    };
    std::vector<Row> rows;
    std::set<std::string> used_names;
    for (const auto& path : result_files) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open result file " + path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw parse_error("malformed result file " + path + ": " + e.what());
        }
        if (!j.contains("method") || !j.contains("tr") || !j.contains("vol") ||
            !j.contains("mdd"))
            throw parse_error("result file " + path + " lacks method/tr/vol/mdd fields");
        Row row;
        row.method = j.at("method").get<std::string>();
        int suffix = 2;
        std::string name = row.method;
        while (used_names.contains(name)) name = row.method + "#" + std::to_string(suffix++);
        row.method = name;
        used_names.insert(name);
        row.tr = j.at("tr").get<double>();
        row.vol = j.at("vol").get<double>();
        row.mdd = j.at("mdd").get<double>();
        if (j.contains("sr") && !j.at("sr").is_null()) row.sr = j.at("sr").get<double>();
        rows.push_back(row);
    }

    std::string text = "Methods        Tr (%)      Sr       Vol        Mdd (%)\n";
    std::string csv = "Methods,Tr(%),Sr,Vol,Mdd(%)\n";
    char buf[200];
    for (const auto& row : rows) {
        char sr_text[32];
        if (row.sr)
            std::snprintf(sr_text, sizeof(sr_text), "%.3f", *row.sr);
        else
            std::snprintf(sr_text, sizeof(sr_text), "n/a");
        std::snprintf(buf, sizeof(buf), "%-14s %8.2f %8s %10.6f %10.2f\n", row.method.c_str(),
                      row.tr * 100.0, sr_text, row.vol, row.mdd * 100.0);
        text += buf;
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%s,%.8f,%.6f\n", row.method.c_str(),
                      row.tr * 100.0, sr_text, row.vol, row.mdd * 100.0);
        csv += buf;
    }
    write_text(out_dir + "/compare.txt", text);
    write_text(out_dir + "/compare.csv", csv);
    std::cout << text;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"qtlab - recurrent policy-gradient trading lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string checkpoint;
    std::string baseline;
    std::vector<std::string> result_files;
    std::string compare_out = ".";
    std::optional<std::uint64_t> seed_override;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config JSON")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--out", out_override, "override the output directory");
    };

    CLI::App* demos = app.add_subcommand("demos", "generate Dual Thrust demonstrations");
    add_common(demos);
    CLI::App* train_cmd = app.add_subcommand("train", "pretrain and train the agent");
    add_common(train_cmd);
    CLI::App* backtest = app.add_subcommand("backtest", "evaluate a checkpoint or baseline");
    add_common(backtest);
    backtest->add_option("--checkpoint", checkpoint, "agent checkpoint to evaluate");
    backtest->add_option("--baseline", baseline, "long-hold | short-hold | dual-thrust");
    CLI::App* compare = app.add_subcommand("compare", "consolidate metric JSONs into a table");
    compare->add_option("results", result_files, "metric JSON files")->required();
    compare->add_option("--out", compare_out, "output directory for the table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (compare->parsed()) {
            cmd_compare(result_files, compare_out);
            return kExitOk;
        }
        RunConfig config = load_run_config(config_path);
        if (seed_override) config.seed = *seed_override;
        if (!out_override.empty()) config.out_dir = out_override;
        finalize_run_config(config);
        if (demos->parsed())
            cmd_demos(config);
        else if (train_cmd->parsed())
            cmd_train(config);
        else if (backtest->parsed())
            cmd_backtest(config, checkpoint, baseline);
        return kExitOk;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const parse_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const validation_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const training_error& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace qtlab
