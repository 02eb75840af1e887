#include "qtlab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "qtlab/errors.hpp"
#include "qtlab/tensor_nn.hpp"  // uniform01

namespace qtlab {

void validate(const BufferConfig& config) {
    if (config.capacity < 1) throw validation_error("buffer: capacity must be >= 1");
    if (config.demo_bonus < 0.0) throw validation_error("buffer: demo_bonus must be >= 0");
    if (config.priority_floor <= 0.0)
        throw validation_error("buffer: priority_floor must be > 0");
    if (config.phi < 0.0 || config.phi > 1.0)
        throw validation_error("buffer: phi must be in [0, 1]");
}

PrioritizedBuffer::PrioritizedBuffer(const BufferConfig& config) : config_(config) {
    validate(config_);
}

std::size_t PrioritizedBuffer::demo_count() const {
    std::size_t n = 0;
    for (const auto& ep : episodes_)
        if (ep.is_demo) ++n;
    return n;
}

std::int64_t PrioritizedBuffer::add(Episode episode) {
    validate(episode);
    if (episodes_.size() >= static_cast<std::size_t>(config_.capacity)) {
        // evict the lowest-priority evictable episode
        std::size_t victim = episodes_.size();
        for (std::size_t i = 0; i < episodes_.size(); ++i) {
            if (config_.demo_protected && episodes_[i].is_demo) continue;
            if (victim == episodes_.size() ||
                episodes_[i].priority < episodes_[victim].priority)
                victim = i;
        }
        if (victim == episodes_.size())
            throw contract_error(
                "buffer capacity exhausted and every stored episode is a protected "
                "demonstration");
        episodes_.erase(episodes_.begin() + static_cast<std::ptrdiff_t>(victim));
    }

    double priority = 1.0;
    for (const auto& ep : episodes_) priority = std::max(priority, ep.priority);
    if (episodes_.empty()) priority = 1.0;

    episode.id = next_id_++;
    episode.priority = priority;
    episodes_.push_back(std::move(episode));
    return episodes_.back().id;
}

double PrioritizedBuffer::priority_sum() const {
    double sum = 0.0;
    for (const auto& ep : episodes_) sum += ep.priority;
    return sum;
}

std::vector<double> PrioritizedBuffer::probabilities() const {
    const double sum = priority_sum();
    std::vector<double> probs;
    probs.reserve(episodes_.size());
    for (const auto& ep : episodes_) probs.push_back(ep.priority / sum);
    return probs;
}

std::vector<SampledEpisode> PrioritizedBuffer::sample(int batch_size, std::mt19937_64& rng,
                                                      bool demos_only) const {
    if (episodes_.empty()) throw contract_error("cannot sample from an empty buffer");
    if (batch_size < 1) throw contract_error("batch_size must be >= 1");

    std::vector<std::size_t> pool;
    pool.reserve(episodes_.size());
    for (std::size_t i = 0; i < episodes_.size(); ++i)
        if (!demos_only || episodes_[i].is_demo) pool.push_back(i);
    if (pool.empty()) throw contract_error("no demonstration episodes to sample");

    // P(i) over the whole buffer per the priority formula; the demos_only
    // restriction renormalizes within the pool for the draw itself.
    const double total_sum = priority_sum();
    const std::size_t n_stored = episodes_.size();

    std::vector<double> cumulative;
    cumulative.reserve(pool.size());
    double pool_sum = 0.0;
    for (auto idx : pool) {
        pool_sum += episodes_[idx].priority;
        cumulative.push_back(pool_sum);
    }

    std::vector<SampledEpisode> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int k = 0; k < batch_size; ++k) {
        const double u = uniform01(rng) * pool_sum;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        std::size_t pick =
            it == cumulative.end() ? pool.size() - 1
                                   : static_cast<std::size_t>(it - cumulative.begin());
        const Episode& ep = episodes_[pool[pick]];
        SampledEpisode s;
        s.episode = &ep;
        s.probability = ep.priority / total_sum;
        s.weight = (1.0 / static_cast<double>(n_stored)) *
                   std::pow(1.0 / s.probability, config_.phi);
        batch.push_back(s);
    }
    double max_w = 0.0;
    for (const auto& s : batch) max_w = std::max(max_w, s.weight);
    if (max_w > 0.0)
        for (auto& s : batch) s.weight /= max_w;
    return batch;
}

Episode* PrioritizedBuffer::find_mutable(std::int64_t id) {
    for (auto& ep : episodes_)
        if (ep.id == id) return &ep;
    return nullptr;
}

const Episode* PrioritizedBuffer::find(std::int64_t id) const {
    for (const auto& ep : episodes_)
        if (ep.id == id) return &ep;
    return nullptr;
}

double PrioritizedBuffer::update_priority(std::int64_t id, double critic_loss_term,
                                          double actor_grad_norm, bool is_demo) {
    Episode* ep = find_mutable(id);
    if (!ep) throw contract_error("update_priority: unknown episode id " + std::to_string(id));
    double p = critic_loss_term + config_.lambda0 * actor_grad_norm +
               (is_demo ? config_.demo_bonus : 0.0);
    p = std::max(p, config_.priority_floor);
    ep->priority = p;
    return p;
}

void PrioritizedBuffer::set_phi(double phi) {
    if (phi < 0.0 || phi > 1.0) throw contract_error("phi must be in [0, 1]");
    config_.phi = phi;
}

namespace {
constexpr std::uint32_t kBufferMagic = 0x42525451;  // "QTRB"
constexpr std::uint32_t kBufferVersion = 1;
}  // namespace

void PrioritizedBuffer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(&kBufferMagic), sizeof(kBufferMagic));
    out.write(reinterpret_cast<const char*>(&kBufferVersion), sizeof(kBufferVersion));
    out.write(reinterpret_cast<const char*>(&next_id_), sizeof(next_id_));
    const auto count = static_cast<std::int64_t>(episodes_.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& ep : episodes_) write_episode(out, ep);
    if (!out) throw io_error("write failed: " + path);
}

PrioritizedBuffer PrioritizedBuffer::load(const std::string& path, const BufferConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::uint32_t magic = 0, version = 0;
    in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || magic != kBufferMagic) throw io_error(path + " is not a replay buffer file");
    if (version != kBufferVersion)
        throw io_error("unsupported buffer version " + std::to_string(version) + " in " + path);

    PrioritizedBuffer buffer{config};
    in.read(reinterpret_cast<char*>(&buffer.next_id_), sizeof(buffer.next_id_));
    std::int64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count < 0) throw io_error("corrupt buffer header in " + path);
    buffer.episodes_.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) buffer.episodes_.push_back(read_episode(in));
    return buffer;
}

}  // namespace qtlab
