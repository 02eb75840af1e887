#pragma once
#include <string>
#include <vector>

#include "qtlab/config.hpp"

namespace qtlab {

// Exit codes shared with CI: 0 ok, 1 internal, 2 input/config, 3 training.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTraining = 3;

// Generates Dual Thrust demonstrations over the training period; writes
// <out>/demos.qtrb, <out>/demos_summary.json and the strategy's equity curve.
void cmd_demos(const RunConfig& config);

// Pretrains on demonstrations (when the ablation mode uses them) and runs the
// online phase; writes checkpoints, train_stats.jsonl and train_summary.json.
void cmd_train(const RunConfig& config);

// Evaluates a checkpoint (greedy) or a named baseline over the test period;
// writes backtest_<name>_metrics.json and backtest_<name>_equity.csv.
// baseline in {long-hold, short-hold, dual-thrust}; empty means checkpoint.
void cmd_backtest(const RunConfig& config, const std::string& checkpoint,
                  const std::string& baseline);

// Consolidates metric JSONs into a Methods/Tr/Sr/Vol/Mdd table (stdout text +
// <out>/compare.csv).
void cmd_compare(const std::vector<std::string>& result_files, const std::string& out_dir);

int run_cli(int argc, char** argv);

}  // namespace qtlab
