#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qtlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Deterministic uniform in [0,1) from the raw generator bits; identical on
// every platform, unlike std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng);

struct NamedTensor {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;  // Adam first moment
    Mat v;  // Adam second moment
    bool is_bias = false;
};

// Flat store of named parameter tensors with a parallel gradient buffer and
// persistent Adam moments. Iteration order is creation order.
class ParamStore {
public:
    Mat& add_weight(const std::string& name, int rows, int cols);
    Mat& add_bias(const std::string& name, int rows);

    bool has(const std::string& name) const;
    Mat& value(const std::string& name);
    const Mat& value(const std::string& name) const;
    Mat& grad(const std::string& name);
    const Mat& grad(const std::string& name) const;

    std::size_t size() const { return tensors_.size(); }
    NamedTensor& tensor(std::size_t i) { return tensors_[i]; }
    const NamedTensor& tensor(std::size_t i) const { return tensors_[i]; }

    void zero_grads();
    // weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero
    void init_uniform(std::mt19937_64& rng);

    double grad_norm() const;
    // scales gradients so the global norm is at most max_norm; returns the
    // pre-clip norm
    double clip_grads(double max_norm);
    void check_grads_finite() const;

    std::int64_t adam_steps() const { return adam_step_count_; }

    void save(std::ostream& out) const;
    void load(std::istream& in);

    friend void adam_step(ParamStore& params, const struct AdamConfig& cfg);
    friend void soft_update(ParamStore& target, const ParamStore& online, double tau);

private:
    NamedTensor& at(const std::string& name);
    const NamedTensor& at(const std::string& name) const;

    std::vector<NamedTensor> tensors_;
    std::int64_t adam_step_count_ = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Importance weights are expected to be
// folded into the gradients by the caller. Throws on non-finite gradients,
// naming the offending tensor.
void adam_step(ParamStore& params, const AdamConfig& cfg);

// target <- tau * online + (1 - tau) * target, elementwise over matching names.
void soft_update(ParamStore& target, const ParamStore& online, double tau);

enum class CellKind { gru, lstm };
CellKind cell_kind_from_string(const std::string& name);
std::string to_string(CellKind kind);

struct CellSpec {
    CellKind kind = CellKind::gru;
    int input_dim = 1;
    int hidden_dim = 1;
};

void validate(const CellSpec& spec);

struct CellState {
    Vec h;
    Vec c;  // LSTM cell state; empty for GRU
};

CellState zero_state(const CellSpec& spec);

// Registers the cell's parameter tensors under `prefix` (e.g. "actor.cell.").
void add_cell_params(ParamStore& params, const std::string& prefix, const CellSpec& spec);

// Post-activation values saved by the forward pass; everything the backward
// pass needs without recomputation.
struct CellCache {
    Vec x, h_prev, c_prev;
    Vec z, r, n;                // GRU gates
    Vec i, f, g, o, c, tanh_c;  // LSTM gates
};

// GRU: z=sig(Wz x+Uz h+bz), r=sig(Wr x+Ur h+br), n=tanh(Wn x+Un(r.h)+bn),
//      h' = (1-z).h + z.n
// LSTM: i,f,o=sig(.), g=tanh(.), c'=f.c+i.g, h'=o.tanh(c')
CellState cell_forward(const CellSpec& spec, const ParamStore& params, const std::string& prefix,
                       const CellState& prev, const Vec& x, CellCache* cache = nullptr);

// Reverse-mode step. On entry dh/dc hold gradients w.r.t. the cell outputs;
// on exit they hold gradients w.r.t. the previous state. Parameter gradients
// accumulate into `params`; dx (if given) receives the input gradient.
void cell_backward(const CellSpec& spec, ParamStore& params, const std::string& prefix,
                   const CellCache& cache, Vec& dh, Vec& dc, Vec* dx = nullptr);

struct CellTape {
    std::vector<CellCache> steps;
};

// Unrolls the cell from the zero state over xs; returns h_t per step.
std::vector<Vec> cell_seq_forward(const CellSpec& spec, const ParamStore& params,
                                  const std::string& prefix, std::span<const Vec> xs,
                                  CellTape* tape = nullptr);

// Exact BPTT over a recorded tape. dh_steps[t] is the upstream gradient on
// h_t (in addition to the recurrent flow). Input gradients land in dxs when
// provided. Gradient accumulation, callers zero_grads() as needed.
void cell_seq_backward(const CellSpec& spec, ParamStore& params, const std::string& prefix,
                       const CellTape& tape, std::span<const Vec> dh_steps,
                       std::vector<Vec>* dxs = nullptr);

enum class Activation { none, tanh, relu, softmax };

struct DenseSpec {
    int input_dim = 1;
    int output_dim = 1;
    Activation act = Activation::none;
};

void add_dense_params(ParamStore& params, const std::string& prefix, const DenseSpec& spec);

struct DenseCache {
    Vec x, y;  // input and post-activation output
};

Vec dense_forward(const DenseSpec& spec, const ParamStore& params, const std::string& prefix,
                  const Vec& x, DenseCache* cache = nullptr);

// Returns the input gradient; parameter gradients accumulate.
Vec dense_backward(const DenseSpec& spec, ParamStore& params, const std::string& prefix,
                   const DenseCache& cache, const Vec& dy);

}  // namespace qtlab
