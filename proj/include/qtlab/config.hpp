#pragma once
#include <cstdint>
#include <optional>
#include <string>

#include "qtlab/agent.hpp"
#include "qtlab/market_data.hpp"
#include "qtlab/replay.hpp"
#include "qtlab/simulator.hpp"

namespace qtlab {

struct DataConfig {
    std::string csv_path;  // exclusive with synth
    bool use_synth = false;
    SynthKind synth_kind = SynthKind::sine;
    int synth_length = 0;
    std::uint64_t synth_seed = 0;
    SynthParams synth_params;
    std::string instrument = "SYN";
};

struct SplitConfig {
    // bars with timestamp <= train_end_ts belong to the training period;
    // unset means the whole series is used for both phases
    std::optional<std::int64_t> train_end_ts;
};

enum class AblationMode { rdpg, rdpg_db, rdpg_bc, qtnet };
AblationMode ablation_from_string(const std::string& name);
std::string to_string(AblationMode mode);
bool ablation_uses_demos(AblationMode mode);
bool ablation_uses_bc(AblationMode mode);

struct RunConfig {
    DataConfig data;
    SplitConfig split;
    SimConfig sim;
    DualThrustParams dual_thrust;
    BufferConfig buffer;
    TrainConfig train;
    AblationMode ablation = AblationMode::qtnet;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    std::string demo_file;  // produced by `demos`, consumed by `train`
    std::string resume_checkpoint;
    std::string loaded_from;  // config file path, recorded in run manifests
};

// Parses the declarative JSON config; unknown keys are rejected. Does not
// touch the filesystem beyond the config file itself.
RunConfig load_run_config(const std::string& path);

// Applies the ablation mode's consistency rules (demo usage, lambda2) and
// validates every sub-config. Path existence is checked by the commands that
// need the paths.
void finalize_run_config(RunConfig& config);

PriceSeries load_series(const DataConfig& data);

// Training slice: everything up to and including train_end_ts.
PriceSeries train_slice(const PriceSeries& series, const RunConfig& config);

// Test slice: warm-up days of history followed by the bars after
// train_end_ts, re-aligned so trading starts right at the boundary.
PriceSeries test_slice(const PriceSeries& series, const RunConfig& config);

std::string config_fingerprint(const RunConfig& config);  // stable content hash

}  // namespace qtlab
