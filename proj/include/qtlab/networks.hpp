#pragma once
#include <span>
#include <vector>

#include "qtlab/episode.hpp"
#include "qtlab/tensor_nn.hpp"

namespace qtlab {

inline constexpr int kActionDim = 2;  // probability vector over {long, short}

struct NetConfig {
    CellKind cell = CellKind::gru;
    int obs_dim = 0;
    int hidden_dim = 32;
    int critic_hidden = 32;
};

void validate(const NetConfig& config);

// Recurrent policy: cell over (observation + previous action), dense softmax
// head over {long, short}.
class ActorNet {
public:
    explicit ActorNet(const NetConfig& config);

    void init(std::mt19937_64& rng);

    CellState zero() const { return zero_state(cell_); }
    const CellSpec& cell_spec() const { return cell_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const NetConfig& config() const { return config_; }

    // one inference step; prev_action is the executed probability vector of
    // the previous step (zero vector at episode start)
    Eigen::Vector2d step(CellState& state, const Observation& obs,
                         const Eigen::Vector2d& prev_action) const;

    struct SeqForward {
        std::vector<Eigen::Vector2d> probs;
        CellTape tape;
        std::vector<DenseCache> head_caches;
    };

    // teacher-forced unroll over an episode: step t consumes (obs_t, stored
    // action_probs_{t-1}); the recurrence starts from the zero state
    SeqForward forward_episode(const Episode& episode) const;

    // dprobs[t] = dL/d(probs_t); exact BPTT, gradients accumulate
    void backward_episode(const SeqForward& fwd, std::span<const Eigen::Vector2d> dprobs);

private:
    std::vector<Vec> episode_inputs(const Episode& episode) const;

    NetConfig config_;
    CellSpec cell_;
    DenseSpec head_;
    ParamStore params_;
};

// Recurrent action-value function: cell over (observation + previous action)
// yields h_t; a dense tanh layer on (h_t + action) yields features u, and the
// scalar head reads w'u + a'(V u + c) + b. The bilinear term gives Q a
// first-order action-state interaction, which a plain stack only reaches
// through activation curvature.
class CriticNet {
public:
    explicit CriticNet(const NetConfig& config);

    void init(std::mt19937_64& rng);

    const CellSpec& cell_spec() const { return cell_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const NetConfig& config() const { return config_; }

    struct TrunkForward {
        std::vector<Vec> hs;
        CellTape tape;
    };

    // teacher-forced unroll producing the history encodings h_t
    TrunkForward trunk_episode(const Episode& episode) const;

    struct HeadCache {
        DenseCache d1;  // x = (h + action), y = feature vector u
    };

    double q_value(const Vec& h, const Eigen::Vector2d& action, HeadCache* cache = nullptr) const;

    // backward through the head only; returns (dh, daction) for upstream dq.
    // Parameter gradients accumulate (callers discard them when only the
    // action gradient is wanted).
    std::pair<Vec, Eigen::Vector2d> head_backward(const HeadCache& cache, double dq);

    // full BPTT: per-step upstream dq at the stored-action head evaluations
    void backward_episode(const TrunkForward& fwd, std::span<const HeadCache> head_caches,
                          std::span<const double> dqs);

private:
    std::vector<Vec> episode_inputs(const Episode& episode) const;

    NetConfig config_;
    CellSpec cell_;
    DenseSpec head1_;
    ParamStore params_;
};

}  // namespace qtlab
