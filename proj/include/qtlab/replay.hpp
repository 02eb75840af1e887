#pragma once
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qtlab/episode.hpp"

namespace qtlab {

struct BufferConfig {
    int capacity = 4096;        // max stored episodes
    double demo_bonus = 0.1;    // epsilon_D, added to demonstration priorities
    double priority_floor = 1e-3;  // epsilon_p
    double lambda0 = 1.0;       // weight of the actor-gradient term in the priority
    double phi = 0.6;           // importance-sampling exponent, annealed toward 1
    bool demo_protected = true; // demonstrations are never evicted
};

void validate(const BufferConfig& config);

struct SampledEpisode {
    const Episode* episode = nullptr;
    double probability = 0.0;  // P(i) at sampling time
    double weight = 0.0;       // max-normalized importance weight
};

// Episode store with proportional prioritized sampling. Single writer; no
// concurrent sampling during mutation.
class PrioritizedBuffer {
public:
    explicit PrioritizedBuffer(const BufferConfig& config);

    // Stores with priority = current max (1.0 into an empty buffer). Evicts
    // the lowest-priority non-demo episode when full; throws when only
    // protected demos remain to evict.
    std::int64_t add(Episode episode);

    // batch_size draws with replacement, P(i) = p_i / sum_j p_j. Weights are
    // (1/N) * (1/P(i))^phi, normalized by the batch maximum. demos_only
    // restricts the draw to demonstration episodes.
    std::vector<SampledEpisode> sample(int batch_size, std::mt19937_64& rng,
                                       bool demos_only = false) const;

    // p_i = critic_loss_term + lambda0 * actor_grad_norm + (demo bonus if
    // is_demo), floored at priority_floor. Returns the new priority.
    double update_priority(std::int64_t id, double critic_loss_term, double actor_grad_norm,
                           bool is_demo);

    std::size_t size() const { return episodes_.size(); }
    bool empty() const { return episodes_.empty(); }
    std::size_t demo_count() const;
    const Episode* find(std::int64_t id) const;
    const std::vector<Episode>& episodes() const { return episodes_; }

    double priority_sum() const;
    std::vector<double> probabilities() const;  // aligned with episodes()

    void set_phi(double phi);
    double phi() const { return config_.phi; }
    const BufferConfig& config() const { return config_; }

    void save(const std::string& path) const;
    static PrioritizedBuffer load(const std::string& path, const BufferConfig& config = {});

private:
    Episode* find_mutable(std::int64_t id);

    BufferConfig config_;
    std::vector<Episode> episodes_;
    std::int64_t next_id_ = 0;
};

}  // namespace qtlab
