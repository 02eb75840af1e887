#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

namespace qtlab {

using Observation = Eigen::VectorXd;

// Which per-step scalar the trainer consumes as the reward signal.
enum class RewardKind { sharpe, raw_return };

RewardKind reward_kind_from_string(const std::string& name);
std::string to_string(RewardKind kind);

struct EpisodeStep {
    Observation obs;
    Eigen::Vector2d action_probs{0.0, 0.0};  // (long, short); one-hot for rule policies
    int action_sign = 0;                     // executed position signal, +1 or -1
    double reward = 0.0;
};

struct Episode {
    std::vector<EpisodeStep> steps;
    std::map<int, int> expert_labels;  // step index -> hindsight action, sparse
    bool is_demo = false;
    double priority = 1.0;  // managed by the replay buffer
    std::int64_t id = -1;   // assigned by the replay buffer

    int length() const { return static_cast<int>(steps.size()); }
};

// Throws contract_error on empty episodes or inconsistent observation dims.
void validate(const Episode& episode);

void write_episode(std::ostream& out, const Episode& episode);
Episode read_episode(std::istream& in);

}  // namespace qtlab
