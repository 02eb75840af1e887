#include "qtlab/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "qtlab/errors.hpp"

namespace qtlab {

using nlohmann::json;
using nlohmann::ordered_json;

AblationMode ablation_from_string(const std::string& name) {
    if (name == "rdpg") return AblationMode::rdpg;
    if (name == "rdpg-db") return AblationMode::rdpg_db;
    if (name == "rdpg-bc") return AblationMode::rdpg_bc;
    if (name == "qtnet") return AblationMode::qtnet;
    throw config_error("unknown ablation mode '" + name + "'");
}

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::rdpg: return "rdpg";
        case AblationMode::rdpg_db: return "rdpg-db";
        case AblationMode::rdpg_bc: return "rdpg-bc";
        case AblationMode::qtnet: return "qtnet";
    }
    return "?";
}

bool ablation_uses_demos(AblationMode mode) {
    return mode == AblationMode::rdpg_db || mode == AblationMode::qtnet;
}

bool ablation_uses_bc(AblationMode mode) {
    return mode == AblationMode::rdpg_bc || mode == AblationMode::qtnet;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key))
            throw config_error("unknown key '" + key + "' in " + where);
    }
}

void parse_data(const json& j, DataConfig& data) {
    check_keys(j, {"csv", "instrument", "synth"}, "data");
    data.csv_path = j.value("csv", data.csv_path);
    data.instrument = j.value("instrument", data.instrument);
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        check_keys(s, {"kind", "length", "seed", "base", "amplitude", "period", "drift", "noise"},
                   "data.synth");
        data.use_synth = true;
        data.synth_kind = synth_kind_from_string(s.value("kind", std::string("sine")));
        data.synth_length = s.value("length", 0);
        data.synth_seed = s.value("seed", std::uint64_t{0});
        data.synth_params.base = s.value("base", data.synth_params.base);
        data.synth_params.amplitude = s.value("amplitude", data.synth_params.amplitude);
        data.synth_params.period = s.value("period", data.synth_params.period);
        data.synth_params.drift = s.value("drift", data.synth_params.drift);
        data.synth_params.noise = s.value("noise", data.synth_params.noise);
    }
    if (data.use_synth && !data.csv_path.empty())
        throw config_error("data: give either csv or synth, not both");
    if (!data.use_synth && data.csv_path.empty())
        throw config_error("data: one of csv or synth is required");
}

void parse_sim(const json& j, SimConfig& sim) {
    check_keys(j,
               {"fee_rate", "slippage", "initial_cash", "contract_multiplier", "margin_rate",
                "loss_termination", "reward_window", "lookback", "bars_per_day"},
               "sim");
    sim.fee_rate = j.value("fee_rate", sim.fee_rate);
    sim.slippage = j.value("slippage", sim.slippage);
    sim.initial_cash = j.value("initial_cash", sim.initial_cash);
    sim.contract_multiplier = j.value("contract_multiplier", sim.contract_multiplier);
    sim.margin_rate = j.value("margin_rate", sim.margin_rate);
    sim.loss_termination = j.value("loss_termination", sim.loss_termination);
    sim.reward_window = j.value("reward_window", sim.reward_window);
    sim.lookback = j.value("lookback", sim.lookback);
    sim.bars_per_day = j.value("bars_per_day", sim.bars_per_day);
}

void parse_dual_thrust(const json& j, DualThrustParams& dt) {
    check_keys(j, {"n", "k1", "k2"}, "dual_thrust");
    dt.n = j.value("n", dt.n);
    dt.k1 = j.value("k1", dt.k1);
    dt.k2 = j.value("k2", dt.k2);
}

void parse_buffer(const json& j, BufferConfig& buffer) {
    check_keys(j, {"capacity", "demo_bonus", "priority_floor", "lambda0", "phi",
                   "demo_protected"},
               "buffer");
    buffer.capacity = j.value("capacity", buffer.capacity);
    buffer.demo_bonus = j.value("demo_bonus", buffer.demo_bonus);
    buffer.priority_floor = j.value("priority_floor", buffer.priority_floor);
    buffer.lambda0 = j.value("lambda0", buffer.lambda0);
    buffer.phi = j.value("phi", buffer.phi);
    buffer.demo_protected = j.value("demo_protected", buffer.demo_protected);
}

void parse_train(const json& j, TrainConfig& train) {
    check_keys(j,
               {"gamma", "tau", "lr_actor", "lr_critic", "lambda1", "lambda2", "batch_size",
                "pretrain_steps", "demo_fraction", "cell", "hidden_dim", "critic_hidden",
                "grad_clip", "reward", "reward_scale", "critic_warmup", "entropy_reg", "bc_form",
                "exploration", "explore_conc_start",
                "explore_conc_end", "gaussian_logit_std", "epochs", "updates_per_rollout"},
               "train");
    train.gamma = j.value("gamma", train.gamma);
    train.tau = j.value("tau", train.tau);
    train.lr_actor = j.value("lr_actor", train.lr_actor);
    train.lr_critic = j.value("lr_critic", train.lr_critic);
    train.lambda1 = j.value("lambda1", train.lambda1);
    train.lambda2 = j.value("lambda2", train.lambda2);
    train.batch_size = j.value("batch_size", train.batch_size);
    train.pretrain_steps = j.value("pretrain_steps", train.pretrain_steps);
    train.demo_fraction = j.value("demo_fraction", train.demo_fraction);
    if (j.contains("cell")) train.cell = cell_kind_from_string(j.at("cell").get<std::string>());
    train.hidden_dim = j.value("hidden_dim", train.hidden_dim);
    train.critic_hidden = j.value("critic_hidden", train.critic_hidden);
    train.grad_clip = j.value("grad_clip", train.grad_clip);
    train.reward_scale = j.value("reward_scale", train.reward_scale);
    train.critic_warmup = j.value("critic_warmup", train.critic_warmup);
    train.entropy_reg = j.value("entropy_reg", train.entropy_reg);
    if (j.contains("reward"))
        train.reward_kind = reward_kind_from_string(j.at("reward").get<std::string>());
    if (j.contains("bc_form"))
        train.bc_form = bc_form_from_string(j.at("bc_form").get<std::string>());
    if (j.contains("exploration"))
        train.exploration = explore_kind_from_string(j.at("exploration").get<std::string>());
    train.explore_conc_start = j.value("explore_conc_start", train.explore_conc_start);
    train.explore_conc_end = j.value("explore_conc_end", train.explore_conc_end);
    train.gaussian_logit_std = j.value("gaussian_logit_std", train.gaussian_logit_std);
    train.epochs = j.value("epochs", train.epochs);
    train.updates_per_rollout = j.value("updates_per_rollout", train.updates_per_rollout);
}

ordered_json run_config_to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["out"] = c.out_dir;
    j["ablation"] = to_string(c.ablation);
    if (c.data.use_synth) {
        j["data"]["synth"] = {{"kind", to_string(c.data.synth_kind)},
                              {"length", c.data.synth_length},
                              {"seed", c.data.synth_seed},
                              {"base", c.data.synth_params.base},
                              {"amplitude", c.data.synth_params.amplitude},
                              {"period", c.data.synth_params.period},
                              {"drift", c.data.synth_params.drift},
                              {"noise", c.data.synth_params.noise}};
    } else {
        j["data"]["csv"] = c.data.csv_path;
    }
    j["data"]["instrument"] = c.data.instrument;
    if (c.split.train_end_ts) j["split"]["train_end_ts"] = *c.split.train_end_ts;
    j["sim"] = {{"fee_rate", c.sim.fee_rate},
                {"slippage", c.sim.slippage},
                {"initial_cash", c.sim.initial_cash},
                {"contract_multiplier", c.sim.contract_multiplier},
                {"margin_rate", c.sim.margin_rate},
                {"loss_termination", c.sim.loss_termination},
                {"reward_window", c.sim.reward_window},
                {"lookback", c.sim.lookback},
                {"bars_per_day", c.sim.bars_per_day}};
    j["dual_thrust"] = {{"n", c.dual_thrust.n}, {"k1", c.dual_thrust.k1}, {"k2", c.dual_thrust.k2}};
    j["buffer"] = {{"capacity", c.buffer.capacity},
                   {"demo_bonus", c.buffer.demo_bonus},
                   {"priority_floor", c.buffer.priority_floor},
                   {"lambda0", c.buffer.lambda0},
                   {"phi", c.buffer.phi},
                   {"demo_protected", c.buffer.demo_protected}};
    j["train"] = {{"gamma", c.train.gamma},
                  {"tau", c.train.tau},
                  {"lr_actor", c.train.lr_actor},
                  {"lr_critic", c.train.lr_critic},
                  {"lambda1", c.train.lambda1},
                  {"lambda2", c.train.lambda2},
                  {"batch_size", c.train.batch_size},
                  {"pretrain_steps", c.train.pretrain_steps},
                  {"demo_fraction", c.train.demo_fraction},
                  {"cell", to_string(c.train.cell)},
                  {"hidden_dim", c.train.hidden_dim},
                  {"critic_hidden", c.train.critic_hidden},
                  {"grad_clip", c.train.grad_clip},
                  {"reward", to_string(c.train.reward_kind)},
                  {"reward_scale", c.train.reward_scale},
                  {"critic_warmup", c.train.critic_warmup},
                  {"entropy_reg", c.train.entropy_reg},
                  {"bc_form", to_string(c.train.bc_form)},
                  {"exploration", to_string(c.train.exploration)},
                  {"explore_conc_start", c.train.explore_conc_start},
                  {"explore_conc_end", c.train.explore_conc_end},
                  {"gaussian_logit_std", c.train.gaussian_logit_std},
                  {"epochs", c.train.epochs},
                  {"updates_per_rollout", c.train.updates_per_rollout}};
    j["demo_file"] = c.demo_file;
    j["resume"] = c.resume_checkpoint;
    return j;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("config parse failure in " + path + ": " + e.what());
    }
    check_keys(j,
               {"seed", "out", "data", "split", "sim", "dual_thrust", "buffer", "train",
                "ablation", "demo_file", "resume"},
               "config root");

    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out", c.out_dir);
    if (!j.contains("data")) throw config_error("config: data section is required");
    parse_data(j.at("data"), c.data);
    if (j.contains("split")) {
        check_keys(j.at("split"), {"train_end_ts"}, "split");
        if (j.at("split").contains("train_end_ts"))
            c.split.train_end_ts = j.at("split").at("train_end_ts").get<std::int64_t>();
    }
    if (j.contains("sim")) parse_sim(j.at("sim"), c.sim);
    if (j.contains("dual_thrust")) parse_dual_thrust(j.at("dual_thrust"), c.dual_thrust);
    if (j.contains("buffer")) parse_buffer(j.at("buffer"), c.buffer);
    if (j.contains("train")) parse_train(j.at("train"), c.train);
    if (j.contains("ablation"))
        c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    c.demo_file = j.value("demo_file", c.demo_file);
    c.resume_checkpoint = j.value("resume", c.resume_checkpoint);
    c.loaded_from = path;
    return c;
}

void finalize_run_config(RunConfig& config) {
    config.train.seed = config.seed;
    if (!ablation_uses_bc(config.ablation)) {
        config.train.lambda2 = 0.0;
    } else if (config.train.lambda2 <= 0.0) {
        throw config_error("ablation " + to_string(config.ablation) +
                           " requires train.lambda2 > 0");
    }
    if (!ablation_uses_demos(config.ablation)) {
        config.train.pretrain_steps = 0;
        config.train.demo_fraction = 0.0;
    }
    try {
        validate(config.sim);
        validate(config.dual_thrust);
        validate(config.buffer);
        validate(config.train);
        if (config.data.use_synth && config.data.synth_length < 1)
            throw validation_error("data.synth.length must be >= 1");
    } catch (const validation_error& e) {
        throw config_error(e.what());
    }
}

PriceSeries load_series(const DataConfig& data) {
    if (data.use_synth) {
        PriceSeries s = synth_series(data.synth_kind, data.synth_length, data.synth_seed,
                                     data.synth_params);
        s.instrument_id = data.instrument;
        return s;
    }
    PriceSeries s = load_csv(data.csv_path);
    if (!data.instrument.empty()) s.instrument_id = data.instrument;
    return s;
}

namespace {

std::size_t first_bar_after(const PriceSeries& series, std::int64_t boundary_ts) {
    std::size_t i = 0;
    while (i < series.size() && series.bars[i].timestamp <= boundary_ts) ++i;
    return i;
}

}  // namespace

PriceSeries train_slice(const PriceSeries& series, const RunConfig& config) {
    if (!config.split.train_end_ts) return series;
    const std::size_t end = first_bar_after(series, *config.split.train_end_ts);
    if (end == 0) throw config_error("split: no bars at or before train_end_ts");
    PriceSeries out;
    out.instrument_id = series.instrument_id;
    out.bars.assign(series.bars.begin(), series.bars.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

PriceSeries test_slice(const PriceSeries& series, const RunConfig& config) {
    if (!config.split.train_end_ts) return series;
    const int nd = config.sim.bars_per_day;
    std::size_t begin = first_bar_after(series, *config.split.train_end_ts);
    begin = ((begin + static_cast<std::size_t>(nd) - 1) / nd) * nd;  // next day boundary
    const auto warmup =
        static_cast<std::size_t>(TradingEnv::warmup_bars(config.sim, config.dual_thrust));
    if (begin < warmup)
        throw config_error("split: not enough history before the test boundary for warm-up");
    if (begin >= series.size()) throw config_error("split: no bars after train_end_ts");
    PriceSeries out;
    out.instrument_id = series.instrument_id;
    out.bars.assign(series.bars.begin() + static_cast<std::ptrdiff_t>(begin - warmup),
                    series.bars.end());
    return out;
}

std::string config_fingerprint(const RunConfig& config) {
    const std::string dump = run_config_to_json(config).dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : dump) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace qtlab
