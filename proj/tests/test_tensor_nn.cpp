#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "qtlab/errors.hpp"
#include "qtlab/tensor_nn.hpp"

using namespace qtlab;

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Central-difference check of every parameter against the gradients already
// accumulated in the store.
void check_grads_against_fd(ParamStore& params, const std::function<double()>& loss,
                            double eps = 1e-5, double tol = 1e-4) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& tensor = params.tensor(k);
        for (Eigen::Index c = 0; c < tensor.value.cols(); ++c) {
            for (Eigen::Index r = 0; r < tensor.value.rows(); ++r) {
                const double saved = tensor.value(r, c);
                tensor.value(r, c) = saved + eps;
                const double up = loss();
                tensor.value(r, c) = saved - eps;
                const double down = loss();
                tensor.value(r, c) = saved;
                const double numeric = (up - down) / (2.0 * eps);
                const double analytic = tensor.grad(r, c);
                const double rel = std::fabs(analytic - numeric) /
                                   std::max(std::fabs(analytic) + std::fabs(numeric), 1e-6);
                if (rel >= tol) {
                    std::ostringstream oss;
                    oss << tensor.name << "(" << r << "," << c << "): analytic " << analytic
                        << " vs numeric " << numeric;
                    FAIL_CHECK(oss.str());
                }
            }
        }
    }
}

std::vector<Vec> random_inputs(std::mt19937_64& rng, int count, int dim) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Vec> xs;
    for (int i = 0; i < count; ++i) {
        Vec x(dim);
        for (int d = 0; d < dim; ++d) x[d] = dist(rng);
        xs.push_back(x);
    }
    return xs;
}

}  // namespace

TEST_CASE("zero-parameter GRU maps everything to the zero vector") {
    CellSpec spec{CellKind::gru, 3, 4};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    Vec x(3);
    x << 1.0, -2.0, 0.5;
    const auto next = cell_forward(spec, params, "c.", zero_state(spec), x);
    CHECK(next.h.norm() == 0.0);
}

TEST_CASE("scalar GRU matches a hand computation") {
    CellSpec spec{CellKind::gru, 1, 1};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    params.value("c.Wz")(0, 0) = 0.7;
    params.value("c.Uz")(0, 0) = -0.3;
    params.value("c.bz")(0, 0) = 0.1;
    params.value("c.Wr")(0, 0) = 0.4;
    params.value("c.Ur")(0, 0) = 0.2;
    params.value("c.br")(0, 0) = -0.2;
    params.value("c.Wn")(0, 0) = 1.1;
    params.value("c.Un")(0, 0) = 0.9;
    params.value("c.bn")(0, 0) = 0.05;

    const double h_prev = 0.3;
    const double x = -0.6;
    const double z = sigmoid_scalar(0.7 * x - 0.3 * h_prev + 0.1);
    const double r = sigmoid_scalar(0.4 * x + 0.2 * h_prev - 0.2);
    const double n = std::tanh(1.1 * x + 0.9 * (r * h_prev) + 0.05);
    const double expected = (1.0 - z) * h_prev + z * n;

    CellState prev;
    prev.h = Vec::Constant(1, h_prev);
    Vec xv = Vec::Constant(1, x);
    const auto next = cell_forward(spec, params, "c.", prev, xv);
    CHECK(next.h[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("saturated LSTM forget gate carries the cell state unchanged") {
    CellSpec spec{CellKind::lstm, 2, 3};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    params.value("c.bf").setConstant(50.0);  // forget gate pinned at 1

    CellState prev = zero_state(spec);
    prev.c << 0.4, -1.2, 2.0;
    prev.h << 0.1, 0.2, -0.1;
    Vec x(2);
    x << 3.0, -1.0;
    const auto next = cell_forward(spec, params, "c.", prev, x);
    // zero input weights make i*g = sigmoid(0) * tanh(0) = 0, so c' = c exactly
    CHECK(next.c[0] == prev.c[0]);
    CHECK(next.c[1] == prev.c[1]);
    CHECK(next.c[2] == prev.c[2]);
    for (int i = 0; i < 3; ++i)
        CHECK(next.h[i] == doctest::Approx(0.5 * std::tanh(prev.c[i])).epsilon(1e-15));
}

TEST_CASE("cell dimension mismatches are shape errors") {
    CellSpec spec{CellKind::gru, 3, 4};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    Vec bad(2);
    bad << 1.0, 2.0;
    CHECK_THROWS_AS(cell_forward(spec, params, "c.", zero_state(spec), bad), contract_error);
}

TEST_CASE("BPTT gradients match central differences for both cell kinds") {
    std::mt19937_64 rng(101);
    for (const auto kind : {CellKind::gru, CellKind::lstm}) {
        for (int trial = 0; trial < 3; ++trial) {
            const int input_dim = 2 + static_cast<int>(rng() % 4);
            const int hidden_dim = 2 + static_cast<int>(rng() % 6);
            const int seq = 3 + static_cast<int>(rng() % 9);
            CellSpec spec{kind, input_dim, hidden_dim};
            ParamStore params;
            add_cell_params(params, "c.", spec);
            params.init_uniform(rng);

            const auto xs = random_inputs(rng, seq, input_dim);
            const auto targets = random_inputs(rng, seq, hidden_dim);

            auto loss = [&] {
                const auto hs = cell_seq_forward(spec, params, "c.",
                                                 std::span<const Vec>(xs.data(), xs.size()));
                double acc = 0.0;
                for (std::size_t t = 0; t < hs.size(); ++t)
                    acc += (hs[t] - targets[t]).squaredNorm();
                return acc;
            };

            CellTape tape;
            const auto hs = cell_seq_forward(spec, params, "c.",
                                             std::span<const Vec>(xs.data(), xs.size()), &tape);
            std::vector<Vec> upstream(static_cast<std::size_t>(seq));
            for (std::size_t t = 0; t < upstream.size(); ++t)
                upstream[t] = 2.0 * (hs[t] - targets[t]);
            params.zero_grads();
            cell_seq_backward(spec, params, "c.", tape,
                              std::span<const Vec>(upstream.data(), upstream.size()));
            check_grads_against_fd(params, loss);
        }
    }
}

TEST_CASE("input gradients from BPTT match central differences") {
    std::mt19937_64 rng(55);
    CellSpec spec{CellKind::gru, 3, 4};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    params.init_uniform(rng);
    auto xs = random_inputs(rng, 5, 3);
    const auto targets = random_inputs(rng, 5, 4);

    auto loss = [&] {
        const auto hs =
            cell_seq_forward(spec, params, "c.", std::span<const Vec>(xs.data(), xs.size()));
        double acc = 0.0;
        for (std::size_t t = 0; t < hs.size(); ++t) acc += (hs[t] - targets[t]).squaredNorm();
        return acc;
    };

    CellTape tape;
    const auto hs =
        cell_seq_forward(spec, params, "c.", std::span<const Vec>(xs.data(), xs.size()), &tape);
    std::vector<Vec> upstream(5);
    for (std::size_t t = 0; t < 5; ++t) upstream[t] = 2.0 * (hs[t] - targets[t]);
    params.zero_grads();
    std::vector<Vec> dxs;
    cell_seq_backward(spec, params, "c.", tape,
                      std::span<const Vec>(upstream.data(), upstream.size()), &dxs);

    const double eps = 1e-5;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        for (int d = 0; d < 3; ++d) {
            const double saved = xs[t][d];
            xs[t][d] = saved + eps;
            const double up = loss();
            xs[t][d] = saved - eps;
            const double down = loss();
            xs[t][d] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            CHECK(dxs[t][d] == doctest::Approx(numeric).epsilon(1e-4));
        }
    }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    std::mt19937_64 rng(9);
    CellSpec spec{CellKind::lstm, 3, 4};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    params.init_uniform(rng);
    const auto xs = random_inputs(rng, 6, 3);
    CellTape tape;
    cell_seq_forward(spec, params, "c.", std::span<const Vec>(xs.data(), xs.size()), &tape);
    std::vector<Vec> upstream(6, Vec::Zero(4));
    params.zero_grads();
    cell_seq_backward(spec, params, "c.", tape,
                      std::span<const Vec>(upstream.data(), upstream.size()));
    CHECK(params.grad_norm() == 0.0);
}

TEST_CASE("sequence of length one reduces to a single cell backward") {
    std::mt19937_64 rng(13);
    CellSpec spec{CellKind::gru, 2, 3};
    ParamStore seq_params;
    add_cell_params(seq_params, "c.", spec);
    seq_params.init_uniform(rng);
    ParamStore single_params;
    add_cell_params(single_params, "c.", spec);
    soft_update(single_params, seq_params, 1.0);

    const auto xs = random_inputs(rng, 1, 2);
    Vec upstream(3);
    upstream << 0.3, -1.0, 0.7;

    CellTape tape;
    cell_seq_forward(spec, seq_params, "c.", std::span<const Vec>(xs.data(), 1), &tape);
    seq_params.zero_grads();
    std::vector<Vec> ups{upstream};
    cell_seq_backward(spec, seq_params, "c.", tape, std::span<const Vec>(ups.data(), 1));

    CellCache cache;
    cell_forward(spec, single_params, "c.", zero_state(spec), xs[0], &cache);
    single_params.zero_grads();
    Vec dh = upstream;
    Vec dc;
    cell_backward(spec, single_params, "c.", cache, dh, dc);

    for (std::size_t k = 0; k < seq_params.size(); ++k)
        CHECK(seq_params.tensor(k).grad == single_params.tensor(k).grad);
}

TEST_CASE("tape length mismatch is a contract error") {
    std::mt19937_64 rng(1);
    CellSpec spec{CellKind::gru, 2, 2};
    ParamStore params;
    add_cell_params(params, "c.", spec);
    const auto xs = random_inputs(rng, 3, 2);
    CellTape tape;
    cell_seq_forward(spec, params, "c.", std::span<const Vec>(xs.data(), xs.size()), &tape);
    std::vector<Vec> upstream(2, Vec::Zero(2));
    CHECK_THROWS_AS(cell_seq_backward(spec, params, "c.", tape,
                                      std::span<const Vec>(upstream.data(), upstream.size())),
                    contract_error);
}

TEST_CASE("dense layers match central differences") {
    std::mt19937_64 rng(321);
    for (const auto act :
         {Activation::none, Activation::tanh, Activation::relu, Activation::softmax}) {
        DenseSpec spec{4, 3, act};
        ParamStore params;
        add_dense_params(params, "d.", spec);
        params.init_uniform(rng);
        const auto xs = random_inputs(rng, 1, 4);
        const auto targets = random_inputs(rng, 1, 3);

        auto loss = [&] {
            const Vec y = dense_forward(spec, params, "d.", xs[0]);
            return (y - targets[0]).squaredNorm();
        };
        DenseCache cache;
        const Vec y = dense_forward(spec, params, "d.", xs[0], &cache);
        params.zero_grads();
        dense_backward(spec, params, "d.", cache, 2.0 * (y - targets[0]));
        check_grads_against_fd(params, loss);
    }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    ParamStore params;
    params.add_weight("w", 2, 2);
    params.value("w") << 1.0, 2.0, 3.0, 4.0;
    const Mat before = params.value("w");
    params.zero_grads();
    adam_step(params, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    CHECK(params.value("w") == before);
    CHECK(params.adam_steps() == 1);
}

TEST_CASE("adam first step on a unit gradient moves by about -lr") {
    ParamStore params;
    params.add_weight("w", 1, 1);
    params.grad("w")(0, 0) = 1.0;
    adam_step(params, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    CHECK(params.value("w")(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        std::mt19937_64 rng(77);
        ParamStore params;
        params.add_weight("w", 3, 3);
        params.init_uniform(rng);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (int k = 0; k < 50; ++k) {
            for (Eigen::Index c = 0; c < 3; ++c)
                for (Eigen::Index r = 0; r < 3; ++r) params.grad("w")(r, c) = dist(rng);
            adam_step(params, AdamConfig{});
        }
        return params.value("w");
    };
    const Mat a = run();
    const Mat b = run();
    CHECK(a == b);
}

TEST_CASE("non-finite gradients abort naming the tensor") {
    ParamStore params;
    params.add_weight("fine", 1, 1);
    params.add_weight("broken", 1, 1);
    params.grad("broken")(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(adam_step(params, AdamConfig{}), doctest::Contains("broken"),
                         training_error);
}

TEST_CASE("soft_update endpoints and midpoint") {
    ParamStore target, online;
    target.add_weight("w", 1, 1);
    online.add_weight("w", 1, 1);
    online.value("w")(0, 0) = 2.0;

    soft_update(target, online, 0.0);
    CHECK(target.value("w")(0, 0) == 0.0);
    soft_update(target, online, 0.5);
    CHECK(target.value("w")(0, 0) == 1.0);
    soft_update(target, online, 1.0);
    CHECK(target.value("w")(0, 0) == 2.0);
}

TEST_CASE("soft_update contracts toward the online parameters geometrically") {
    std::mt19937_64 rng(5);
    ParamStore target, online;
    target.add_weight("w", 4, 4);
    online.add_weight("w", 4, 4);
    target.init_uniform(rng);
    online.init_uniform(rng);
    const double tau = 0.25;
    double dist = (target.value("w") - online.value("w")).norm();
    for (int k = 0; k < 12; ++k) {
        soft_update(target, online, tau);
        const double next = (target.value("w") - online.value("w")).norm();
        CHECK(next == doctest::Approx((1.0 - tau) * dist).epsilon(1e-12));
        dist = next;
    }
}

TEST_CASE("soft_update rejects mismatched stores") {
    ParamStore a, b;
    a.add_weight("w", 2, 2);
    b.add_weight("w", 3, 2);
    CHECK_THROWS_AS(soft_update(a, b, 0.5), contract_error);
}

TEST_CASE("parameter store round-trips bit-exactly through the checkpoint format") {
    std::mt19937_64 rng(99);
    ParamStore params;
    CellSpec spec{CellKind::lstm, 3, 5};
    add_cell_params(params, "c.", spec);
    add_dense_params(params, "d.", DenseSpec{5, 2, Activation::softmax});
    params.init_uniform(rng);
    // touch the optimizer state too
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::size_t k = 0; k < params.size(); ++k)
        params.tensor(k).grad.setConstant(dist(rng));
    adam_step(params, AdamConfig{});

    std::stringstream buf;
    params.save(buf);
    ParamStore loaded;
    loaded.load(buf);
    REQUIRE(loaded.size() == params.size());
    CHECK(loaded.adam_steps() == params.adam_steps());
    for (std::size_t k = 0; k < params.size(); ++k) {
        CHECK(loaded.tensor(k).name == params.tensor(k).name);
        CHECK(loaded.tensor(k).value == params.tensor(k).value);
        CHECK(loaded.tensor(k).m == params.tensor(k).m);
        CHECK(loaded.tensor(k).v == params.tensor(k).v);
    }
}

TEST_CASE("loading garbage is an io error") {
    std::stringstream buf;
    buf << "definitely not a parameter store";
    ParamStore params;
    CHECK_THROWS_AS(params.load(buf), io_error);
}
