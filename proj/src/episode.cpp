#include "qtlab/episode.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "qtlab/errors.hpp"

namespace qtlab {

RewardKind reward_kind_from_string(const std::string& name) {
    if (name == "sharpe") return RewardKind::sharpe;
    if (name == "raw" || name == "raw_return") return RewardKind::raw_return;
    throw config_error("unknown reward kind '" + name + "'");
}

std::string to_string(RewardKind kind) {
    return kind == RewardKind::sharpe ? "sharpe" : "raw_return";
}

void validate(const Episode& episode) {
    if (episode.steps.empty()) throw contract_error("episode has no steps");
    const auto dim = episode.steps.front().obs.size();
    for (const auto& step : episode.steps) {
        if (step.obs.size() != dim)
            throw contract_error("episode steps disagree on observation dimensionality");
        if (step.action_sign != 1 && step.action_sign != -1)
            throw contract_error("episode action sign must be +1 or -1");
    }
    for (const auto& [idx, label] : episode.expert_labels) {
        if (idx < 0 || idx >= episode.length())
            throw contract_error("expert label index out of range");
        if (label != 1 && label != -1) throw contract_error("expert label must be +1 or -1");
    }
}

namespace {

template <typename T>
void put(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw io_error("truncated episode data");
    return value;
}

}  // namespace

void write_episode(std::ostream& out, const Episode& episode) {
    put<std::int64_t>(out, episode.id);
    put<std::uint8_t>(out, episode.is_demo ? 1 : 0);
    put<double>(out, episode.priority);
    put<std::int32_t>(out, episode.length());
    put<std::int32_t>(out,
                      episode.steps.empty() ? 0 : static_cast<std::int32_t>(episode.steps[0].obs.size()));
    for (const auto& step : episode.steps) {
        out.write(reinterpret_cast<const char*>(step.obs.data()),
                  static_cast<std::streamsize>(sizeof(double)) * step.obs.size());
        put<double>(out, step.action_probs[0]);
        put<double>(out, step.action_probs[1]);
        put<std::int8_t>(out, static_cast<std::int8_t>(step.action_sign));
        put<double>(out, step.reward);
    }
    put<std::int32_t>(out, static_cast<std::int32_t>(episode.expert_labels.size()));
    for (const auto& [idx, label] : episode.expert_labels) {
        put<std::int32_t>(out, idx);
        put<std::int8_t>(out, static_cast<std::int8_t>(label));
    }
}

Episode read_episode(std::istream& in) {
    Episode episode;
    episode.id = get<std::int64_t>(in);
    episode.is_demo = get<std::uint8_t>(in) != 0;
    episode.priority = get<double>(in);
    const auto n_steps = get<std::int32_t>(in);
    const auto obs_dim = get<std::int32_t>(in);
    if (n_steps < 0 || obs_dim < 0) throw io_error("corrupt episode header");
    episode.steps.resize(static_cast<std::size_t>(n_steps));
    for (auto& step : episode.steps) {
        step.obs.resize(obs_dim);
        in.read(reinterpret_cast<char*>(step.obs.data()),
                static_cast<std::streamsize>(sizeof(double)) * obs_dim);
        if (!in) throw io_error("truncated episode observations");
        step.action_probs[0] = get<double>(in);
        step.action_probs[1] = get<double>(in);
        step.action_sign = get<std::int8_t>(in);
        step.reward = get<double>(in);
    }
    const auto n_labels = get<std::int32_t>(in);
    for (std::int32_t i = 0; i < n_labels; ++i) {
        const auto idx = get<std::int32_t>(in);
        const auto label = get<std::int8_t>(in);
        episode.expert_labels[idx] = label;
    }
    return episode;
}

}  // namespace qtlab
