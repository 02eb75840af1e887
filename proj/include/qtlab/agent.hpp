#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qtlab/networks.hpp"
#include "qtlab/replay.hpp"
#include "qtlab/simulator.hpp"

namespace qtlab {

enum class BcForm { qfilter_mse, negated_advantage };
BcForm bc_form_from_string(const std::string& name);
std::string to_string(BcForm form);

enum class ExploreKind { dirichlet, gaussian_logits };
ExploreKind explore_kind_from_string(const std::string& name);
std::string to_string(ExploreKind kind);

struct TrainConfig {
    double gamma = 0.99;
    double tau = 0.005;
    double lr_actor = 1e-4;
    double lr_critic = 1e-3;
    double lambda1 = 1.0;   // deterministic policy gradient weight
    double lambda2 = 0.5;   // behavior cloning weight
    int batch_size = 16;    // episodes per update
    int pretrain_steps = 2000;
    int critic_warmup = 0;  // updates before the actor starts moving
    double demo_fraction = 0.25;  // demo floor per batch
    std::uint64_t seed = 42;

    CellKind cell = CellKind::gru;
    int hidden_dim = 32;
    int critic_hidden = 32;
    double grad_clip = 1.0;        // global-norm clip; <= 0 disables
    RewardKind reward_kind = RewardKind::sharpe;
    double reward_scale = 1.0;     // multiplies rewards inside the TD targets
    double entropy_reg = 0.0;      // entropy bonus inside the lambda1 term;
                                   // keeps the softmax from saturating
    BcForm bc_form = BcForm::qfilter_mse;
    ExploreKind exploration = ExploreKind::dirichlet;
    double explore_conc_start = 8.0;   // Dirichlet concentration, annealed up
    double explore_conc_end = 64.0;
    double gaussian_logit_std = 0.3;

    int epochs = 1;              // passes over the training days
    int updates_per_rollout = 1; // train steps after each rolled day
};

void validate(const TrainConfig& config);

// Actor-critic pair with target copies and the cumulative update counter.
class QTAgent {
public:
    QTAgent(const NetConfig& net_config, std::uint64_t seed);

    Eigen::Vector2d act(CellState& state, const Observation& obs,
                        const Eigen::Vector2d& prev_action) const;
    static int action_sign(const Eigen::Vector2d& probs) {
        return probs[0] >= probs[1] ? 1 : -1;  // tie goes long
    }

    ActorNet& actor() { return *actor_; }
    const ActorNet& actor() const { return *actor_; }
    CriticNet& critic() { return *critic_; }
    const CriticNet& critic() const { return *critic_; }
    ActorNet& actor_target() { return *actor_target_; }
    CriticNet& critic_target() { return *critic_target_; }
    const ActorNet& actor_target() const { return *actor_target_; }
    const CriticNet& critic_target() const { return *critic_target_; }

    const NetConfig& net_config() const { return net_config_; }
    std::int64_t train_steps() const { return train_steps_; }
    void bump_train_steps() { ++train_steps_; }

    void save(const std::string& path) const;
    static QTAgent load(const std::string& path);

private:
    NetConfig net_config_;
    std::unique_ptr<ActorNet> actor_;
    std::unique_ptr<CriticNet> critic_;
    std::unique_ptr<ActorNet> actor_target_;
    std::unique_ptr<CriticNet> critic_target_;
    std::int64_t train_steps_ = 0;
};

// Bootstrapped targets from the target networks, unrolled teacher-forced over
// each episode: y_t = r_t + gamma * Q'(h_{t+1}, mu'(h_{t+1})), y_T = r_T.
std::vector<std::vector<double>> critic_targets(const QTAgent& agent,
                                                std::span<const Episode* const> batch,
                                                double gamma, double reward_scale = 1.0);

struct TrainStats {
    std::int64_t step = 0;
    double critic_loss = 0.0;
    double actor_objective = 0.0;  // mean Q at the actor's action, pre-update
    double bc_loss = 0.0;
    double actor_grad_norm = 0.0;
    double critic_grad_norm = 0.0;
    double bc_active_fraction = 0.0;  // labeled steps passing the Q-filter
    std::vector<std::int64_t> sampled_ids;
    double explore_concentration = 0.0;  // filled by the rollout loop
    double explore_flip_rate = 0.0;
    double phi = 0.0;
};

std::string to_json_line(const TrainStats& stats);

// One full update: PER batch (with demo floor), critic TD step, actor step
// with the mixed policy gradient (lambda1 * DPG + lambda2 * Q-filtered BC),
// priority refresh, soft target update.
TrainStats train_step(QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config,
                      std::mt19937_64& rng, bool demos_only = false);

struct ActorGradResult {
    Vec flat;                       // flattened gradient, creation order
    double objective = 0.0;         // mean Q at mu over the batch
    double bc_loss = 0.0;           // value of the BC term
    double bc_active_fraction = 0.0;
    std::vector<double> grad_terms;  // per-item mean ||dQ/da||, feeds priorities
};

// The actor update's gradient computation, exposed so the mixed-gradient
// decomposition is testable. Accumulates lambda1 * dpg + lambda2 * bc into
// the actor's gradient buffers (after zeroing them) and returns a flattened
// copy; the critic's buffers are used as scratch and left zeroed.
ActorGradResult actor_gradient(QTAgent& agent, std::span<const SampledEpisode> batch,
                               const TrainConfig& config, double lambda1, double lambda2);

// train_step iterations restricted to demonstration episodes.
void pretrain(QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config, int steps,
              std::mt19937_64& rng,
              const std::function<void(const TrainStats&)>& on_stats = {});

// Greedy recurrent policy over a frozen agent (backtests, evaluation).
struct AgentPolicy : Policy {
    explicit AgentPolicy(const QTAgent& agent) : agent(&agent) {}
    void on_episode_start() override;
    std::pair<Eigen::Vector2d, int> act(const Observation& obs) override;

    const QTAgent* agent;
    CellState state;
    Eigen::Vector2d prev_action = Eigen::Vector2d::Zero();
};

// Rollout policy with exploration noise on the actor probabilities.
struct ExploringPolicy : Policy {
    ExploringPolicy(const QTAgent& agent, const TrainConfig& config, std::mt19937_64& rng)
        : agent(&agent), config(&config), rng(&rng) {}
    void on_episode_start() override;
    std::pair<Eigen::Vector2d, int> act(const Observation& obs) override;

    const QTAgent* agent;
    const TrainConfig* config;
    std::mt19937_64* rng;
    double concentration = 8.0;
    CellState state;
    Eigen::Vector2d prev_action = Eigen::Vector2d::Zero();
    int steps = 0;
    int flips = 0;  // perturbed sign != greedy sign
};

struct TrainOptions {
    std::string stats_path;      // JSON-lines, appended; empty disables
    std::string checkpoint_dir;  // empty disables
    int checkpoint_every = 500;  // train steps between checkpoints
};

struct TrainSummary {
    std::int64_t train_steps = 0;   // cumulative, after training
    int episodes_rolled = 0;
    double final_equity = 0.0;
    bool terminated = false;  // a rollout hit loss/margin termination
};

// Online phase: alternates one-day rollouts (exploring policy, hindsight
// labels attached) with train_step updates; anneals phi toward 1 and the
// exploration concentration toward its end value; checkpoints periodically.
TrainSummary train(QTAgent& agent, const PriceSeries& series, PrioritizedBuffer& buffer,
                   const TrainConfig& train_config, const SimConfig& sim_config,
                   const DualThrustParams& dt_params, const TrainOptions& options);

// Fraction of steps where the greedy teacher-forced actor reproduces the
// stored action signs.
double action_agreement(const QTAgent& agent, std::span<const Episode> episodes);

}  // namespace qtlab
