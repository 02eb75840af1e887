#include "qtlab/agent.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "qtlab/errors.hpp"

namespace qtlab {

BcForm bc_form_from_string(const std::string& name) {
    if (name == "qfilter_mse") return BcForm::qfilter_mse;
    if (name == "negated_advantage") return BcForm::negated_advantage;
    throw config_error("unknown bc_form '" + name + "'");
}

std::string to_string(BcForm form) {
    return form == BcForm::qfilter_mse ? "qfilter_mse" : "negated_advantage";
}

ExploreKind explore_kind_from_string(const std::string& name) {
    if (name == "dirichlet") return ExploreKind::dirichlet;
    if (name == "gaussian_logits") return ExploreKind::gaussian_logits;
    throw config_error("unknown exploration kind '" + name + "'");
}

std::string to_string(ExploreKind kind) {
    return kind == ExploreKind::dirichlet ? "dirichlet" : "gaussian_logits";
}

void validate(const TrainConfig& config) {
    if (config.gamma < 0.0 || config.gamma > 1.0)
        throw validation_error("train: gamma must be in [0, 1]");
    if (config.tau <= 0.0 || config.tau > 1.0)
        throw validation_error("train: tau must be in (0, 1]");
    if (config.lambda1 < 0.0 || config.lambda2 < 0.0)
        throw validation_error("train: lambda1 and lambda2 must be >= 0");
    if (config.lr_actor <= 0.0 || config.lr_critic <= 0.0)
        throw validation_error("train: learning rates must be > 0");
    if (config.batch_size < 1) throw validation_error("train: batch_size must be >= 1");
    if (config.demo_fraction < 0.0 || config.demo_fraction > 1.0)
        throw validation_error("train: demo_fraction must be in [0, 1]");
    if (config.pretrain_steps < 0) throw validation_error("train: pretrain_steps must be >= 0");
    if (config.critic_warmup < 0) throw validation_error("train: critic_warmup must be >= 0");
    if (config.reward_scale <= 0.0) throw validation_error("train: reward_scale must be > 0");
    if (config.entropy_reg < 0.0) throw validation_error("train: entropy_reg must be >= 0");
    if (config.epochs < 1) throw validation_error("train: epochs must be >= 1");
    if (config.updates_per_rollout < 0)
        throw validation_error("train: updates_per_rollout must be >= 0");
}

QTAgent::QTAgent(const NetConfig& net_config, std::uint64_t seed) : net_config_(net_config) {
    validate(net_config_);
    actor_ = std::make_unique<ActorNet>(net_config_);
    critic_ = std::make_unique<CriticNet>(net_config_);
    actor_target_ = std::make_unique<ActorNet>(net_config_);
    critic_target_ = std::make_unique<CriticNet>(net_config_);
    std::mt19937_64 rng(seed);
    actor_->init(rng);
    critic_->init(rng);
    soft_update(actor_target_->params(), actor_->params(), 1.0);
    soft_update(critic_target_->params(), critic_->params(), 1.0);
}

Eigen::Vector2d QTAgent::act(CellState& state, const Observation& obs,
                             const Eigen::Vector2d& prev_action) const {
    return actor_->step(state, obs, prev_action);
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B435451;  // "QTCK"
constexpr std::uint32_t kCheckpointVersion = 1;

Eigen::Vector2d onehot(int sign) {
    return sign > 0 ? Eigen::Vector2d{1.0, 0.0} : Eigen::Vector2d{0.0, 1.0};
}

std::size_t param_count(const ParamStore& store) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < store.size(); ++i) n += store.tensor(i).grad.size();
    return n;
}

Vec flatten_grads(const ParamStore& store) {
    Vec flat(param_count(store));
    Eigen::Index pos = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Mat& g = store.tensor(i).grad;
        for (Eigen::Index c = 0; c < g.cols(); ++c)
            for (Eigen::Index r = 0; r < g.rows(); ++r) flat[pos++] = g(r, c);
    }
    return flat;
}

}  // namespace

void QTAgent::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(&kCheckpointMagic), sizeof(kCheckpointMagic));
    out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
    const std::uint8_t cell = net_config_.cell == CellKind::gru ? 0 : 1;
    out.write(reinterpret_cast<const char*>(&cell), sizeof(cell));
    const std::int32_t dims[3] = {net_config_.obs_dim, net_config_.hidden_dim,
                                  net_config_.critic_hidden};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(&train_steps_), sizeof(train_steps_));
    actor_->params().save(out);
    critic_->params().save(out);
    actor_target_->params().save(out);
    critic_target_->params().save(out);
    if (!out) throw io_error("write failed: " + path);
}

QTAgent QTAgent::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::uint32_t magic = 0, version = 0;
    in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || magic != kCheckpointMagic) throw io_error(path + " is not an agent checkpoint");
    if (version != kCheckpointVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version));
    std::uint8_t cell = 0;
    in.read(reinterpret_cast<char*>(&cell), sizeof(cell));
    std::int32_t dims[3] = {0, 0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    std::int64_t steps = 0;
    in.read(reinterpret_cast<char*>(&steps), sizeof(steps));
    if (!in) throw io_error("truncated checkpoint header in " + path);

    NetConfig cfg;
    cfg.cell = cell == 0 ? CellKind::gru : CellKind::lstm;
    cfg.obs_dim = dims[0];
    cfg.hidden_dim = dims[1];
    cfg.critic_hidden = dims[2];
    QTAgent agent(cfg, 0);
    agent.train_steps_ = steps;
    agent.actor_->params().load(in);
    agent.critic_->params().load(in);
    agent.actor_target_->params().load(in);
    agent.critic_target_->params().load(in);
    return agent;
}

std::vector<std::vector<double>> critic_targets(const QTAgent& agent,
                                                std::span<const Episode* const> batch,
                                                double gamma, double reward_scale) {
    std::vector<std::vector<double>> targets;
    targets.reserve(batch.size());
    for (const Episode* ep : batch) {
        if (!ep || ep->steps.empty()) throw contract_error("critic_targets: empty episode");
        const int T = ep->length();
        auto trunk = agent.critic_target().trunk_episode(*ep);
        auto afwd = agent.actor_target().forward_episode(*ep);
        std::vector<double> y(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            double target = reward_scale * ep->steps[static_cast<std::size_t>(t)].reward;
            if (t + 1 < T) {
                const double q_next = agent.critic_target().q_value(
                    trunk.hs[static_cast<std::size_t>(t + 1)],
                    afwd.probs[static_cast<std::size_t>(t + 1)]);
                target += gamma * q_next;
            }
            y[static_cast<std::size_t>(t)] = target;
        }
        targets.push_back(std::move(y));
    }
    return targets;
}

namespace {

// PER draw with the configured demonstration floor; importance weights are
// renormalized across the combined batch.
std::vector<SampledEpisode> sample_batch(const PrioritizedBuffer& buffer,
                                         const TrainConfig& config, std::mt19937_64& rng,
                                         bool demos_only) {
    std::vector<SampledEpisode> batch;
    if (demos_only) {
        batch = buffer.sample(config.batch_size, rng, true);
    } else {
        int floor = 0;
        if (buffer.demo_count() > 0 && config.demo_fraction > 0.0)
            floor = std::min(config.batch_size,
                             static_cast<int>(std::ceil(config.demo_fraction *
                                                        config.batch_size)));
        if (config.batch_size - floor > 0) {
            batch = buffer.sample(config.batch_size - floor, rng, false);
        }
        if (floor > 0) {
            auto forced = buffer.sample(floor, rng, true);
            batch.insert(batch.end(), forced.begin(), forced.end());
        }
    }
    const double n = static_cast<double>(buffer.size());
    double max_w = 0.0;
    for (auto& s : batch) {
        s.weight = (1.0 / n) * std::pow(1.0 / s.probability, buffer.phi());
        max_w = std::max(max_w, s.weight);
    }
    for (auto& s : batch) s.weight /= max_w;
    return batch;
}

struct CriticPhaseResult {
    double loss = 0.0;
    double grad_norm = 0.0;
    std::vector<double> td_terms;  // per-item mean |y - Q|
};

CriticPhaseResult critic_phase(QTAgent& agent, std::span<const SampledEpisode> batch,
                               const std::vector<std::vector<double>>& targets,
                               const TrainConfig& config) {
    CriticNet& critic = agent.critic();
    critic.params().zero_grads();
    CriticPhaseResult result;
    result.td_terms.resize(batch.size(), 0.0);
    const double b = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Episode& ep = *batch[i].episode;
        const double w = batch[i].weight;
        const int T = ep.length();
        auto trunk = critic.trunk_episode(ep);
        std::vector<CriticNet::HeadCache> caches(static_cast<std::size_t>(T));
        std::vector<double> dqs(static_cast<std::size_t>(T));
        double abs_sum = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto ti = static_cast<std::size_t>(t);
            const double q =
                critic.q_value(trunk.hs[ti], ep.steps[ti].action_probs, &caches[ti]);
            const double e = targets[i][ti] - q;
            result.loss += w * e * e / (T * b);
            dqs[ti] = w * (-2.0 * e) / (T * b);
            abs_sum += std::fabs(e);
        }
        result.td_terms[i] = abs_sum / T;
        critic.backward_episode(trunk, caches, dqs);
    }
    result.grad_norm = critic.params().clip_grads(config.grad_clip);
    adam_step(critic.params(), AdamConfig{config.lr_critic, 0.9, 0.999, 1e-8});
    return result;
}

}  // namespace

ActorGradResult actor_gradient(QTAgent& agent, std::span<const SampledEpisode> batch,
                               const TrainConfig& config, double lambda1, double lambda2) {
    ActorNet& actor = agent.actor();
    CriticNet& critic = agent.critic();
    actor.params().zero_grads();
    critic.params().zero_grads();  // scratch: head backward accumulates here

    ActorGradResult result;
    result.grad_terms.resize(batch.size(), 0.0);
    const double b = static_cast<double>(batch.size());
    int labeled = 0;
    int active = 0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Episode& ep = *batch[i].episode;
        const double w = batch[i].weight;
        const int T = ep.length();
        auto afwd = actor.forward_episode(ep);
        auto trunk = critic.trunk_episode(ep);

        std::vector<Eigen::Vector2d> dprobs(static_cast<std::size_t>(T),
                                            Eigen::Vector2d::Zero());
        std::vector<double> q_mu(static_cast<std::size_t>(T));
        std::vector<Eigen::Vector2d> action_grads(static_cast<std::size_t>(T));
        double grad_norm_sum = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto ti = static_cast<std::size_t>(t);
            CriticNet::HeadCache cache;
            q_mu[ti] = critic.q_value(trunk.hs[ti], afwd.probs[ti], &cache);
            auto [dh, da] = critic.head_backward(cache, 1.0);
            action_grads[ti] = da;
            grad_norm_sum += da.norm();
            result.objective += q_mu[ti] / (T * b);
            if (lambda1 != 0.0) {
                dprobs[ti] -= (lambda1 * w / (T * b)) * da;
                if (config.entropy_reg > 0.0) {
                    // minimizing -beta * H(p) keeps probabilities interior
                    const Eigen::Vector2d entropy_grad{std::log(afwd.probs[ti][0]) + 1.0,
                                                       std::log(afwd.probs[ti][1]) + 1.0};
                    dprobs[ti] += (lambda1 * w * config.entropy_reg / (T * b)) * entropy_grad;
                }
            }
        }
        result.grad_terms[i] = grad_norm_sum / T;

        for (const auto& [idx, label] : ep.expert_labels) {
            const auto ti = static_cast<std::size_t>(idx);
            const Eigen::Vector2d expert = onehot(label);
            const double q_expert = critic.q_value(trunk.hs[ti], expert);
            ++labeled;
            if (!(q_expert > q_mu[ti])) continue;  // Q-filter: expert must beat the actor
            ++active;
            if (config.bc_form == BcForm::qfilter_mse) {
                const Eigen::Vector2d diff = afwd.probs[ti] - expert;
                result.bc_loss += w * diff.squaredNorm() / (T * b);
                if (lambda2 != 0.0) dprobs[ti] += (lambda2 * w * 2.0 / (T * b)) * diff;
            } else {
                // literal negated advantage: only path to theta is through
                // Q(h, mu(h)), so the gradient pushes mu to raise Q
                result.bc_loss += -w * (q_expert - q_mu[ti]) / (T * b);
                if (lambda2 != 0.0) dprobs[ti] += (lambda2 * w / (T * b)) * action_grads[ti];
            }
        }
        actor.backward_episode(afwd, dprobs);
    }
    critic.params().zero_grads();
    result.bc_active_fraction = labeled > 0 ? static_cast<double>(active) / labeled : 0.0;
    result.flat = flatten_grads(actor.params());
    return result;
}

TrainStats train_step(QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config,
                      std::mt19937_64& rng, bool demos_only) {
    validate(config);
    if (buffer.empty()) throw contract_error("train_step: buffer is empty");

    TrainStats stats;
    auto batch = sample_batch(buffer, config, rng, demos_only);

    std::vector<const Episode*> eps;
    eps.reserve(batch.size());
    for (const auto& s : batch) eps.push_back(s.episode);
    const auto targets = critic_targets(agent, eps, config.gamma, config.reward_scale);

    const auto critic_result = critic_phase(agent, batch, targets, config);
    stats.critic_loss = critic_result.loss;
    stats.critic_grad_norm = critic_result.grad_norm;
    if (!std::isfinite(stats.critic_loss))
        throw training_error("non-finite critic loss at step " +
                             std::to_string(agent.train_steps() + 1));

    auto actor_result = actor_gradient(agent, batch, config, config.lambda1, config.lambda2);
    stats.actor_objective = actor_result.objective;
    stats.bc_loss = actor_result.bc_loss;
    stats.bc_active_fraction = actor_result.bc_active_fraction;
    if (!std::isfinite(stats.actor_objective) || !std::isfinite(stats.bc_loss))
        throw training_error("non-finite actor objective at step " +
                             std::to_string(agent.train_steps() + 1));
    stats.actor_grad_norm = agent.actor().params().clip_grads(config.grad_clip);
    // the critic warms up alone; a cold critic's action gradients would
    // saturate the softmax in an arbitrary constant direction
    if (agent.train_steps() >= config.critic_warmup)
        adam_step(agent.actor().params(), AdamConfig{config.lr_actor, 0.9, 0.999, 1e-8});

    std::set<std::int64_t> seen;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Episode& ep = *batch[i].episode;
        stats.sampled_ids.push_back(ep.id);
        if (seen.insert(ep.id).second)
            buffer.update_priority(ep.id, critic_result.td_terms[i],
                                   actor_result.grad_terms[i], ep.is_demo);
    }

    soft_update(agent.actor_target().params(), agent.actor().params(), config.tau);
    soft_update(agent.critic_target().params(), agent.critic().params(), config.tau);

    agent.bump_train_steps();
    stats.step = agent.train_steps();
    stats.phi = buffer.phi();
    return stats;
}

void pretrain(QTAgent& agent, PrioritizedBuffer& buffer, const TrainConfig& config, int steps,
              std::mt19937_64& rng, const std::function<void(const TrainStats&)>& on_stats) {
    if (buffer.demo_count() == 0)
        throw contract_error("pretrain requires at least one demonstration episode");
    for (int k = 0; k < steps; ++k) {
        const auto stats = train_step(agent, buffer, config, rng, /*demos_only=*/true);
        if (on_stats) on_stats(stats);
    }
}

void AgentPolicy::on_episode_start() {
    state = agent->actor().zero();
    prev_action = Eigen::Vector2d::Zero();
}

std::pair<Eigen::Vector2d, int> AgentPolicy::act(const Observation& obs) {
    const Eigen::Vector2d probs = agent->act(state, obs, prev_action);
    prev_action = probs;
    return {probs, QTAgent::action_sign(probs)};
}

void ExploringPolicy::on_episode_start() {
    state = agent->actor().zero();
    prev_action = Eigen::Vector2d::Zero();
}

std::pair<Eigen::Vector2d, int> ExploringPolicy::act(const Observation& obs) {
    const Eigen::Vector2d greedy = agent->act(state, obs, prev_action);
    Eigen::Vector2d probs;
    if (config->exploration == ExploreKind::dirichlet) {
        // concentration * p + floor keeps both alphas positive
        double g0, g1;
        {
            std::gamma_distribution<double> d0(concentration * greedy[0] + 0.1);
            std::gamma_distribution<double> d1(concentration * greedy[1] + 0.1);
            g0 = d0(*rng);
            g1 = d1(*rng);
        }
        const double sum = g0 + g1;
        if (sum <= 0.0 || !std::isfinite(sum))
            probs = greedy;
        else
            probs = Eigen::Vector2d{g0 / sum, g1 / sum};
    } else {
        std::normal_distribution<double> noise(0.0, config->gaussian_logit_std);
        const double l0 = std::log(greedy[0] + 1e-12) + noise(*rng);
        const double l1 = std::log(greedy[1] + 1e-12) + noise(*rng);
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m);
        const double e1 = std::exp(l1 - m);
        probs = Eigen::Vector2d{e0 / (e0 + e1), e1 / (e0 + e1)};
    }
    ++steps;
    if (QTAgent::action_sign(probs) != QTAgent::action_sign(greedy)) ++flips;
    prev_action = probs;
    return {probs, QTAgent::action_sign(probs)};
}

std::string to_json_line(const TrainStats& stats) {
    nlohmann::ordered_json j;
    j["step"] = stats.step;
    j["critic_loss"] = stats.critic_loss;
    j["actor_obj"] = stats.actor_objective;
    j["bc_loss"] = stats.bc_loss;
    j["grad_norm"] = stats.actor_grad_norm;
    j["critic_grad_norm"] = stats.critic_grad_norm;
    j["bc_active_fraction"] = stats.bc_active_fraction;
    j["epsilon_stats"] = {{"explore_conc", stats.explore_concentration},
                          {"explore_flip_rate", stats.explore_flip_rate},
                          {"phi", stats.phi}};
    j["sampled_ids"] = stats.sampled_ids;
    return j.dump();
}

TrainSummary train(QTAgent& agent, const PriceSeries& series, PrioritizedBuffer& buffer,
                   const TrainConfig& train_config, const SimConfig& sim_config,
                   const DualThrustParams& dt_params, const TrainOptions& options) {
    validate(train_config);
    TradingEnv env(series, sim_config, dt_params);
    const int start = TradingEnv::warmup_bars(sim_config, dt_params);
    const int nd = sim_config.bars_per_day;
    if (start + nd > static_cast<int>(series.size()))
        throw validation_error("train: series too short for one trading day after warm-up");
    const int n_days = (static_cast<int>(series.size()) - start) / nd;
    const long planned =
        std::max(1L, static_cast<long>(train_config.epochs) * n_days *
                         std::max(1, train_config.updates_per_rollout));

    std::mt19937_64 rng(train_config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::ofstream stats_out;
    if (!options.stats_path.empty()) {
        stats_out.open(options.stats_path, std::ios::app);
        if (!stats_out) throw io_error("cannot open " + options.stats_path);
    }

    const double phi0 = buffer.phi();
    const std::int64_t steps_at_entry = agent.train_steps();
    ExploringPolicy policy(agent, train_config, rng);

    TrainSummary summary;
    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        Observation obs = env.reset(start);
        bool more_days = true;
        while (more_days) {
            const double progress =
                static_cast<double>(agent.train_steps() - steps_at_entry) /
                static_cast<double>(planned);
            policy.concentration =
                train_config.explore_conc_start +
                (train_config.explore_conc_end - train_config.explore_conc_start) *
                    std::min(1.0, progress);
            policy.on_episode_start();
            policy.steps = 0;
            policy.flips = 0;

            Episode episode;
            std::vector<double> day_opens;
            while (!env.done()) {
                day_opens.push_back(
                    series.bars[static_cast<std::size_t>(env.current_bar())].open);
                auto [probs, sign] = policy.act(obs);
                StepResult sr = env.step(sign);
                EpisodeStep step;
                step.obs = std::move(obs);
                step.action_probs = probs;
                step.action_sign = sign;
                step.reward = train_config.reward_kind == RewardKind::sharpe
                                  ? sr.reward
                                  : sr.account_profit / sim_config.initial_cash;
                episode.steps.push_back(std::move(step));
                obs = std::move(sr.observation);
            }
            episode.expert_labels =
                hindsight_expert(std::span<const double>(day_opens.data(), day_opens.size()));
            buffer.add(std::move(episode));
            ++summary.episodes_rolled;
            const double flip_rate =
                policy.steps > 0 ? static_cast<double>(policy.flips) / policy.steps : 0.0;

            for (int u = 0; u < train_config.updates_per_rollout; ++u) {
                const double update_progress =
                    static_cast<double>(agent.train_steps() - steps_at_entry + 1) /
                    static_cast<double>(planned);
                buffer.set_phi(phi0 + (1.0 - phi0) * std::min(1.0, update_progress));
                TrainStats stats = train_step(agent, buffer, train_config, rng);
                stats.explore_concentration = policy.concentration;
                stats.explore_flip_rate = flip_rate;
                if (stats_out) stats_out << to_json_line(stats) << '\n';
                if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 &&
                    agent.train_steps() % options.checkpoint_every == 0) {
                    agent.save(options.checkpoint_dir + "/ckpt_" +
                               std::to_string(agent.train_steps()) + ".bin");
                }
            }

            if (env.terminated()) {
                summary.terminated = true;
                break;  // account ruined; next epoch restarts fresh
            }
            more_days = env.begin_next_day();
            if (more_days) obs = env.observation();
        }
        summary.final_equity = env.account().equity;
    }
    summary.train_steps = agent.train_steps();
    if (!options.checkpoint_dir.empty()) agent.save(options.checkpoint_dir + "/final.ckpt");
    return summary;
}

double action_agreement(const QTAgent& agent, std::span<const Episode> episodes) {
    long total = 0;
    long agree = 0;
    for (const auto& ep : episodes) {
        const auto fwd = agent.actor().forward_episode(ep);
        for (std::size_t t = 0; t < ep.steps.size(); ++t) {
            ++total;
            if (QTAgent::action_sign(fwd.probs[t]) == ep.steps[t].action_sign) ++agree;
        }
    }
    return total > 0 ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
}

}  // namespace qtlab
