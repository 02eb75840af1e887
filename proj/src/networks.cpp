#include "qtlab/networks.hpp"

#include "qtlab/errors.hpp"

namespace qtlab {

void validate(const NetConfig& config) {
    if (config.obs_dim < 1) throw validation_error("net: obs_dim must be >= 1");
    if (config.hidden_dim < 1) throw validation_error("net: hidden_dim must be >= 1");
    if (config.critic_hidden < 1) throw validation_error("net: critic_hidden must be >= 1");
}

namespace {

Vec make_input(const Observation& obs, const Eigen::Vector2d& prev_action) {
    Vec x(obs.size() + kActionDim);
    x.head(obs.size()) = obs;
    x.tail(kActionDim) = prev_action;
    return x;
}

}  // namespace

ActorNet::ActorNet(const NetConfig& config) : config_(config) {
    validate(config_);
    cell_ = CellSpec{config_.cell, config_.obs_dim + kActionDim, config_.hidden_dim};
    head_ = DenseSpec{config_.hidden_dim, kActionDim, Activation::softmax};
    add_cell_params(params_, "cell.", cell_);
    add_dense_params(params_, "head.", head_);
}

void ActorNet::init(std::mt19937_64& rng) { params_.init_uniform(rng); }

Eigen::Vector2d ActorNet::step(CellState& state, const Observation& obs,
                               const Eigen::Vector2d& prev_action) const {
    if (!obs.allFinite()) throw contract_error("actor: non-finite observation");
    state = cell_forward(cell_, params_, "cell.", state, make_input(obs, prev_action));
    return dense_forward(head_, params_, "head.", state.h);
}

std::vector<Vec> ActorNet::episode_inputs(const Episode& episode) const {
    std::vector<Vec> xs;
    xs.reserve(episode.steps.size());
    Eigen::Vector2d prev = Eigen::Vector2d::Zero();
    for (const auto& step : episode.steps) {
        xs.push_back(make_input(step.obs, prev));
        prev = step.action_probs;
    }
    return xs;
}

ActorNet::SeqForward ActorNet::forward_episode(const Episode& episode) const {
    SeqForward fwd;
    const auto xs = episode_inputs(episode);
    const auto hs = cell_seq_forward(cell_, params_, "cell.", xs, &fwd.tape);
    fwd.probs.reserve(hs.size());
    fwd.head_caches.resize(hs.size());
    for (std::size_t t = 0; t < hs.size(); ++t) {
        const Vec p = dense_forward(head_, params_, "head.", hs[t], &fwd.head_caches[t]);
        fwd.probs.push_back(Eigen::Vector2d(p[0], p[1]));
    }
    return fwd;
}

void ActorNet::backward_episode(const SeqForward& fwd,
                                std::span<const Eigen::Vector2d> dprobs) {
    if (dprobs.size() != fwd.probs.size())
        throw contract_error("actor backward: upstream gradient count mismatch");
    std::vector<Vec> dh_steps(fwd.probs.size());
    for (std::size_t t = 0; t < fwd.probs.size(); ++t)
        dh_steps[t] = dense_backward(head_, params_, "head.", fwd.head_caches[t], dprobs[t]);
    cell_seq_backward(cell_, params_, "cell.", fwd.tape, dh_steps);
}

CriticNet::CriticNet(const NetConfig& config) : config_(config) {
    validate(config_);
    cell_ = CellSpec{config_.cell, config_.obs_dim + kActionDim, config_.hidden_dim};
    head1_ = DenseSpec{config_.hidden_dim + kActionDim, config_.critic_hidden, Activation::tanh};
    add_cell_params(params_, "cell.", cell_);
    add_dense_params(params_, "q1.", head1_);
    params_.add_weight("q2.w", 1, config_.critic_hidden);
    params_.add_bias("q2.b", 1);
    params_.add_weight("qa.V", kActionDim, config_.critic_hidden);
    params_.add_bias("qa.c", kActionDim);
}

void CriticNet::init(std::mt19937_64& rng) { params_.init_uniform(rng); }

std::vector<Vec> CriticNet::episode_inputs(const Episode& episode) const {
    std::vector<Vec> xs;
    xs.reserve(episode.steps.size());
    Eigen::Vector2d prev = Eigen::Vector2d::Zero();
    for (const auto& step : episode.steps) {
        xs.push_back(make_input(step.obs, prev));
        prev = step.action_probs;
    }
    return xs;
}

CriticNet::TrunkForward CriticNet::trunk_episode(const Episode& episode) const {
    TrunkForward fwd;
    const auto xs = episode_inputs(episode);
    fwd.hs = cell_seq_forward(cell_, params_, "cell.", xs, &fwd.tape);
    return fwd;
}

double CriticNet::q_value(const Vec& h, const Eigen::Vector2d& action, HeadCache* cache) const {
    Vec in(config_.hidden_dim + kActionDim);
    in.head(config_.hidden_dim) = h;
    in.tail(kActionDim) = action;
    HeadCache local;
    HeadCache* c = cache ? cache : &local;
    const Vec u = dense_forward(head1_, params_, "q1.", in, &c->d1);
    const Vec gate = params_.value("qa.V") * u + params_.value("qa.c").col(0);
    return (params_.value("q2.w") * u)(0, 0) + params_.value("q2.b")(0, 0) +
           action.dot(gate.head<kActionDim>());
}

std::pair<Vec, Eigen::Vector2d> CriticNet::head_backward(const HeadCache& cache, double dq) {
    const Vec& u = cache.d1.y;
    const Eigen::Vector2d action = cache.d1.x.tail(kActionDim);

    params_.grad("q2.w") += dq * u.transpose();
    params_.grad("q2.b")(0, 0) += dq;
    params_.grad("qa.V") += dq * action * u.transpose();
    params_.grad("qa.c").col(0) += dq * action;

    const Vec gate = params_.value("qa.V") * u + params_.value("qa.c").col(0);
    const Vec du = dq * (params_.value("q2.w").transpose().col(0) +
                         params_.value("qa.V").transpose() * action);
    const Vec din = dense_backward(head1_, params_, "q1.", cache.d1, du);
    Vec dh = din.head(config_.hidden_dim);
    Eigen::Vector2d da(din[config_.hidden_dim] + dq * gate[0],
                       din[config_.hidden_dim + 1] + dq * gate[1]);
    return {dh, da};
}

void CriticNet::backward_episode(const TrunkForward& fwd, std::span<const HeadCache> head_caches,
                                 std::span<const double> dqs) {
    if (head_caches.size() != fwd.hs.size() || dqs.size() != fwd.hs.size())
        throw contract_error("critic backward: length mismatch");
    std::vector<Vec> dh_steps(fwd.hs.size());
    for (std::size_t t = 0; t < fwd.hs.size(); ++t) {
        auto [dh, da] = head_backward(head_caches[t], dqs[t]);
        dh_steps[t] = std::move(dh);  // stored prev actions carry no parameter path
    }
    cell_seq_backward(cell_, params_, "cell.", fwd.tape, dh_steps);
}

}  // namespace qtlab
