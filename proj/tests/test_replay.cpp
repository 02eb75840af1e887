#include <boost/math/distributions/chi_squared.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "qtlab/errors.hpp"
#include "qtlab/replay.hpp"

using namespace qtlab;

namespace {

Episode make_episode(int steps, bool is_demo, double reward = 0.0) {
    Episode ep;
    ep.is_demo = is_demo;
    for (int t = 0; t < steps; ++t) {
        EpisodeStep step;
        step.obs = Observation::Constant(6, static_cast<double>(t));
        step.action_probs = Eigen::Vector2d{0.8, 0.2};
        step.action_sign = t % 2 == 0 ? 1 : -1;
        step.reward = reward;
        ep.steps.push_back(step);
    }
    if (steps >= 2) {
        ep.expert_labels[0] = 1;
        ep.expert_labels[steps - 1] = -1;
    }
    return ep;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("adding to an empty buffer assigns priority 1") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto id = buffer.add(make_episode(3, false));
    CHECK(buffer.find(id)->priority == 1.0);
}

TEST_CASE("new episodes inherit the maximum stored priority") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto id = buffer.add(make_episode(3, false));
    buffer.update_priority(id, 3.0, 0.5, false);
    const auto id2 = buffer.add(make_episode(3, false));
    CHECK(buffer.find(id2)->priority == doctest::Approx(3.5));
}

TEST_CASE("eviction removes the lowest-priority agent episode, never demos") {
    BufferConfig cfg;
    cfg.capacity = 3;
    PrioritizedBuffer buffer{cfg};
    const auto demo_id = buffer.add(make_episode(2, true));
    const auto a = buffer.add(make_episode(2, false));
    const auto b = buffer.add(make_episode(2, false));
    buffer.update_priority(a, 0.2, 0.0, false);
    buffer.update_priority(b, 5.0, 0.0, false);

    buffer.add(make_episode(2, false));  // evicts a, the lowest-priority non-demo
    CHECK(buffer.size() == 3);
    CHECK(buffer.find(a) == nullptr);
    CHECK(buffer.find(b) != nullptr);
    CHECK(buffer.find(demo_id) != nullptr);
}

TEST_CASE("a buffer full of protected demos rejects further episodes") {
    BufferConfig cfg;
    cfg.capacity = 2;
    PrioritizedBuffer buffer{cfg};
    buffer.add(make_episode(2, true));
    buffer.add(make_episode(2, true));
    CHECK_THROWS_WITH_AS(buffer.add(make_episode(2, false)), doctest::Contains("protected"),
                         contract_error);
}

TEST_CASE("unprotected demos are evictable") {
    BufferConfig cfg;
    cfg.capacity = 2;
    cfg.demo_protected = false;
    PrioritizedBuffer buffer{cfg};
    const auto d1 = buffer.add(make_episode(2, true));
    buffer.add(make_episode(2, true));
    buffer.update_priority(d1, 0.01, 0.0, true);
    CHECK_NOTHROW(buffer.add(make_episode(2, false)));
    CHECK(buffer.find(d1) == nullptr);
}

TEST_CASE("demos survive any eviction sequence when protected") {
    BufferConfig cfg;
    cfg.capacity = 8;
    PrioritizedBuffer buffer{cfg};
    std::vector<std::int64_t> demo_ids;
    for (int k = 0; k < 3; ++k) demo_ids.push_back(buffer.add(make_episode(2, true)));
    std::mt19937_64 rng(6);
    for (int k = 0; k < 100; ++k) {
        const auto id = buffer.add(make_episode(2, false));
        buffer.update_priority(id, static_cast<double>(rng() % 100) / 10.0, 0.0, false);
    }
    CHECK(buffer.size() == 8);
    for (const auto id : demo_ids) CHECK(buffer.find(id) != nullptr);
}

TEST_CASE("sampling frequencies follow the priorities") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto a = buffer.add(make_episode(2, false));
    const auto b = buffer.add(make_episode(2, false));
    buffer.update_priority(a, 1.0, 0.0, false);
    buffer.update_priority(b, 3.0, 0.0, false);

    std::mt19937_64 rng(12345);
    int hits_b = 0;
    const int draws = 100'000;
    for (const auto& s : buffer.sample(draws, rng))
        if (s.episode->id == b) ++hits_b;
    const double freq = static_cast<double>(hits_b) / draws;
    CHECK(std::fabs(freq - 0.75) < 0.01);
}

TEST_CASE("uniform priorities with phi=1 give unit weights after normalization") {
    BufferConfig cfg;
    cfg.phi = 1.0;
    PrioritizedBuffer buffer{cfg};
    for (int k = 0; k < 4; ++k) buffer.add(make_episode(2, false));
    std::mt19937_64 rng(3);
    for (const auto& s : buffer.sample(16, rng)) CHECK(s.weight == doctest::Approx(1.0));
}

TEST_CASE("a single stored episode is always drawn with P=1 and w=1") {
    PrioritizedBuffer buffer{BufferConfig{}};
    buffer.add(make_episode(2, false));
    std::mt19937_64 rng(4);
    for (const auto& s : buffer.sample(5, rng)) {
        CHECK(s.probability == doctest::Approx(1.0));
        CHECK(s.weight == doctest::Approx(1.0));
    }
}

TEST_CASE("sampling an empty buffer errors") {
    PrioritizedBuffer buffer{BufferConfig{}};
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(buffer.sample(1, rng), contract_error);
}

TEST_CASE("demos_only sampling draws only demonstrations") {
    PrioritizedBuffer buffer{BufferConfig{}};
    buffer.add(make_episode(2, true));
    for (int k = 0; k < 10; ++k) buffer.add(make_episode(2, false));
    std::mt19937_64 rng(8);
    for (const auto& s : buffer.sample(32, rng, true)) CHECK(s.episode->is_demo);
}

TEST_CASE("probabilities sum to one after every mutation") {
    PrioritizedBuffer buffer{BufferConfig{}};
    std::mt19937_64 rng(9);
    std::vector<std::int64_t> ids;
    for (int k = 0; k < 40; ++k) {
        ids.push_back(buffer.add(make_episode(2, (k % 5) == 0)));
        buffer.update_priority(ids[static_cast<std::size_t>(rng() % ids.size())],
                               static_cast<double>(rng() % 1000) / 100.0,
                               static_cast<double>(rng() % 100) / 100.0, false);
        double sum = 0.0;
        for (const double p : buffer.probabilities()) sum += p;
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("chi-square goodness of fit over 100k draws") {
    std::mt19937_64 setup_rng(2718);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 16 + static_cast<int>(setup_rng() % 49);  // up to 64 episodes
        PrioritizedBuffer buffer{BufferConfig{}};
        std::vector<std::int64_t> ids;
        for (int k = 0; k < n; ++k) ids.push_back(buffer.add(make_episode(2, false)));
        for (const auto id : ids)
            buffer.update_priority(id, 0.1 + static_cast<double>(setup_rng() % 90) / 100.0, 0.0,
                                   false);

        const auto probs = buffer.probabilities();
        std::vector<long> counts(static_cast<std::size_t>(n), 0);
        std::mt19937_64 rng(99 + static_cast<unsigned>(trial));
        const int draws = 100'000;
        for (const auto& s : buffer.sample(draws, rng))
            ++counts[static_cast<std::size_t>(s.episode->id)];

        double stat = 0.0;
        for (int k = 0; k < n; ++k) {
            const double expected = probs[static_cast<std::size_t>(k)] * draws;
            const double diff =
                static_cast<double>(counts[static_cast<std::size_t>(k)]) - expected;
            stat += diff * diff / expected;
        }
        boost::math::chi_squared dist(n - 1);
        const double p_value = 1.0 - boost::math::cdf(dist, stat);
        CHECK(p_value > 0.001);
    }
}

TEST_CASE("update_priority reproduces the demo arithmetic") {
    BufferConfig cfg;  // demo_bonus 0.1, lambda0 1.0
    PrioritizedBuffer buffer{cfg};
    const auto id = buffer.add(make_episode(2, true));
    const double p = buffer.update_priority(id, 0.5, 0.2, true);
    CHECK(p == 0.5 + 1.0 * 0.2 + 0.1);  // same-order expression, exact
}

TEST_CASE("update_priority floors at epsilon_p") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto id = buffer.add(make_episode(2, false));
    CHECK(buffer.update_priority(id, 0.0, 0.0, false) == doctest::Approx(1e-3));
}

TEST_CASE("demo bonus adds exactly epsilon_D") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto a = buffer.add(make_episode(2, false));
    const auto b = buffer.add(make_episode(2, true));
    const double base = buffer.update_priority(a, 0.4, 0.3, false);
    const double demo = buffer.update_priority(b, 0.4, 0.3, true);
    CHECK(demo == doctest::Approx(base + 0.1).epsilon(1e-15));
}

TEST_CASE("update_priority is monotone in both terms") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto id = buffer.add(make_episode(2, false));
    std::mt19937_64 rng(44);
    for (int k = 0; k < 200; ++k) {
        const double loss = static_cast<double>(rng() % 1000) / 250.0;
        const double grad = static_cast<double>(rng() % 1000) / 250.0;
        const double p0 = buffer.update_priority(id, loss, grad, false);
        CHECK(buffer.update_priority(id, loss + 0.5, grad, false) >= p0);
        CHECK(buffer.update_priority(id, loss, grad + 0.5, false) >= p0);
    }
}

TEST_CASE("update_priority rejects unknown ids") {
    PrioritizedBuffer buffer{BufferConfig{}};
    CHECK_THROWS_AS(buffer.update_priority(17, 0.1, 0.1, false), contract_error);
}

TEST_CASE("save/load round-trip preserves content and the sampling stream") {
    BufferConfig cfg;
    PrioritizedBuffer buffer{cfg};
    std::mt19937_64 rng(31);
    for (int k = 0; k < 12; ++k) {
        const auto id = buffer.add(make_episode(3, k < 4, 0.25 * k));
        buffer.update_priority(id, static_cast<double>(rng() % 100) / 25.0, 0.1, k < 4);
    }
    const auto path = temp_path("buffer_roundtrip.qtrb");
    buffer.save(path);
    auto loaded = PrioritizedBuffer::load(path, cfg);

    REQUIRE(loaded.size() == buffer.size());
    for (std::size_t k = 0; k < buffer.episodes().size(); ++k) {
        const auto& a = buffer.episodes()[k];
        const auto& b = loaded.episodes()[k];
        CHECK(a.id == b.id);
        CHECK(a.priority == b.priority);
        CHECK(a.is_demo == b.is_demo);
        REQUIRE(a.steps.size() == b.steps.size());
        for (std::size_t t = 0; t < a.steps.size(); ++t) {
            CHECK(a.steps[t].obs == b.steps[t].obs);
            CHECK(a.steps[t].action_probs == b.steps[t].action_probs);
            CHECK(a.steps[t].action_sign == b.steps[t].action_sign);
            CHECK(a.steps[t].reward == b.steps[t].reward);
        }
        CHECK(a.expert_labels == b.expert_labels);
    }

    std::mt19937_64 rng_a(7), rng_b(7);
    const auto batch_a = buffer.sample(32, rng_a);
    const auto batch_b = loaded.sample(32, rng_b);
    for (std::size_t k = 0; k < batch_a.size(); ++k) {
        CHECK(batch_a[k].episode->id == batch_b[k].episode->id);
        CHECK(batch_a[k].weight == batch_b[k].weight);
    }
}

TEST_CASE("wrong version or magic fails to load") {
    const auto path = temp_path("buffer_bad.qtrb");
    {
        std::ofstream out(path, std::ios::binary);
        const std::uint32_t magic = 0x42525451, version = 999;
        out.write(reinterpret_cast<const char*>(&magic), 4);
        out.write(reinterpret_cast<const char*>(&version), 4);
    }
    CHECK_THROWS_WITH_AS(PrioritizedBuffer::load(path), doctest::Contains("version"), io_error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "junkjunkjunk";
    }
    CHECK_THROWS_AS(PrioritizedBuffer::load(path), io_error);
}

TEST_CASE("empty buffer round-trips") {
    PrioritizedBuffer buffer{BufferConfig{}};
    const auto path = temp_path("buffer_empty.qtrb");
    buffer.save(path);
    const auto loaded = PrioritizedBuffer::load(path);
    CHECK(loaded.empty());
}
