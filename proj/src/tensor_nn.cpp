#include "qtlab/tensor_nn.hpp"

#include <cassert>
#include <cmath>
#include <istream>
#include <ostream>

#include "qtlab/errors.hpp"

namespace qtlab {

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Mat& ParamStore::add_weight(const std::string& name, int rows, int cols) {
    if (has(name)) throw contract_error("duplicate tensor '" + name + "'");
    NamedTensor t;
    t.name = name;
    t.value = Mat::Zero(rows, cols);
    t.grad = Mat::Zero(rows, cols);
    t.m = Mat::Zero(rows, cols);
    t.v = Mat::Zero(rows, cols);
    t.is_bias = false;
    tensors_.push_back(std::move(t));
    return tensors_.back().value;
}

Mat& ParamStore::add_bias(const std::string& name, int rows) {
    Mat& value = add_weight(name, rows, 1);
    tensors_.back().is_bias = true;
    return value;
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return true;
    return false;
}

NamedTensor& ParamStore::at(const std::string& name) {
    for (auto& t : tensors_)
        if (t.name == name) return t;
    throw contract_error("unknown tensor '" + name + "'");
}

const NamedTensor& ParamStore::at(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t;
    throw contract_error("unknown tensor '" + name + "'");
}

Mat& ParamStore::value(const std::string& name) { return at(name).value; }
const Mat& ParamStore::value(const std::string& name) const { return at(name).value; }
Mat& ParamStore::grad(const std::string& name) { return at(name).grad; }
const Mat& ParamStore::grad(const std::string& name) const { return at(name).grad; }

void ParamStore::zero_grads() {
    for (auto& t : tensors_) t.grad.setZero();
}

void ParamStore::init_uniform(std::mt19937_64& rng) {
    for (auto& t : tensors_) {
        if (t.is_bias) {
            t.value.setZero();
            continue;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.value.cols()));
        for (Eigen::Index c = 0; c < t.value.cols(); ++c)
            for (Eigen::Index r = 0; r < t.value.rows(); ++r)
                t.value(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    }
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& t : tensors_) sq += t.grad.squaredNorm();
    return std::sqrt(sq);
}

double ParamStore::clip_grads(double max_norm) {
    const double norm = grad_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& t : tensors_) t.grad *= scale;
    }
    return norm;
}

void ParamStore::check_grads_finite() const {
    for (const auto& t : tensors_)
        if (!t.grad.allFinite())
            throw training_error("non-finite gradient in tensor '" + t.name + "'");
}

void adam_step(ParamStore& params, const AdamConfig& cfg) {
    params.check_grads_finite();
    params.adam_step_count_ += 1;
    const double t = static_cast<double>(params.adam_step_count_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& tensor : params.tensors_) {
        tensor.m = cfg.beta1 * tensor.m + (1.0 - cfg.beta1) * tensor.grad;
        tensor.v = cfg.beta2 * tensor.v.array().matrix() +
                   (1.0 - cfg.beta2) * tensor.grad.cwiseProduct(tensor.grad);
        const Mat m_hat = tensor.m / bc1;
        const Mat v_hat = tensor.v / bc2;
        tensor.value.array() -=
            cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
        assert(tensor.value.allFinite());
    }
}

void soft_update(ParamStore& target, const ParamStore& online, double tau) {
    if (target.size() != online.size())
        throw contract_error("soft_update: stores hold different tensor counts");
    for (std::size_t i = 0; i < target.size(); ++i) {
        auto& t = target.tensors_[i];
        const auto& o = online.tensors_[i];
        if (t.name != o.name || t.value.rows() != o.value.rows() ||
            t.value.cols() != o.value.cols())
            throw contract_error("soft_update: tensor mismatch at '" + t.name + "'");
        t.value = tau * o.value + (1.0 - tau) * t.value;
    }
}

namespace {

constexpr std::uint32_t kStoreMagic = 0x51504152;  // "RAPQ"
constexpr std::uint32_t kStoreVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("truncated parameter store");
    return v;
}

void put_mat(std::ostream& out, const Mat& m) {
    put<std::int32_t>(out, static_cast<std::int32_t>(m.rows()));
    put<std::int32_t>(out, static_cast<std::int32_t>(m.cols()));
    // row-major on disk
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
}

Mat get_mat(std::istream& in) {
    const auto rows = get<std::int32_t>(in);
    const auto cols = get<std::int32_t>(in);
    if (rows < 0 || cols < 0) throw io_error("corrupt tensor shape");
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>(in);
    return m;
}

}  // namespace

void ParamStore::save(std::ostream& out) const {
    put(out, kStoreMagic);
    put(out, kStoreVersion);
    put<std::int64_t>(out, adam_step_count_);
    put<std::int32_t>(out, static_cast<std::int32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
        put<std::int32_t>(out, static_cast<std::int32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint8_t>(out, t.is_bias ? 1 : 0);
        put_mat(out, t.value);
        put_mat(out, t.m);
        put_mat(out, t.v);
    }
}

void ParamStore::load(std::istream& in) {
    if (get<std::uint32_t>(in) != kStoreMagic) throw io_error("not a parameter store");
    const auto version = get<std::uint32_t>(in);
    if (version != kStoreVersion)
        throw io_error("unsupported parameter store version " + std::to_string(version));
    adam_step_count_ = get<std::int64_t>(in);
    const auto count = get<std::int32_t>(in);
    tensors_.clear();
    tensors_.reserve(static_cast<std::size_t>(count));
    for (std::int32_t k = 0; k < count; ++k) {
        NamedTensor t;
        const auto name_len = get<std::int32_t>(in);
        t.name.resize(static_cast<std::size_t>(name_len));
        in.read(t.name.data(), name_len);
        if (!in) throw io_error("truncated tensor name");
        t.is_bias = get<std::uint8_t>(in) != 0;
        t.value = get_mat(in);
        t.m = get_mat(in);
        t.v = get_mat(in);
        t.grad = Mat::Zero(t.value.rows(), t.value.cols());
        tensors_.push_back(std::move(t));
    }
}

CellKind cell_kind_from_string(const std::string& name) {
    if (name == "gru") return CellKind::gru;
    if (name == "lstm") return CellKind::lstm;
    throw config_error("unknown cell kind '" + name + "'");
}

std::string to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "lstm"; }

void validate(const CellSpec& spec) {
    if (spec.input_dim < 1 || spec.hidden_dim < 1)
        throw validation_error("cell dims must be >= 1");
}

CellState zero_state(const CellSpec& spec) {
    CellState s;
    s.h = Vec::Zero(spec.hidden_dim);
    if (spec.kind == CellKind::lstm) s.c = Vec::Zero(spec.hidden_dim);
    return s;
}

void add_cell_params(ParamStore& params, const std::string& prefix, const CellSpec& spec) {
    validate(spec);
    const int in = spec.input_dim;
    const int hid = spec.hidden_dim;
    const char* const* gates;
    static const char* gru_gates[] = {"z", "r", "n"};
    static const char* lstm_gates[] = {"i", "f", "g", "o"};
    int n_gates;
    if (spec.kind == CellKind::gru) {
        gates = gru_gates;
        n_gates = 3;
    } else {
        gates = lstm_gates;
        n_gates = 4;
    }
    for (int k = 0; k < n_gates; ++k) {
        params.add_weight(prefix + "W" + gates[k], hid, in);
        params.add_weight(prefix + "U" + gates[k], hid, hid);
        params.add_bias(prefix + "b" + gates[k], hid);
    }
}

namespace {

Vec sigmoid(const Vec& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

void check_dims(const CellSpec& spec, const CellState& prev, const Vec& x) {
    if (x.size() != spec.input_dim)
        throw contract_error("cell input size " + std::to_string(x.size()) +
                             " != spec input_dim " + std::to_string(spec.input_dim));
    if (prev.h.size() != spec.hidden_dim)
        throw contract_error("cell hidden size " + std::to_string(prev.h.size()) +
                             " != spec hidden_dim " + std::to_string(spec.hidden_dim));
    if (spec.kind == CellKind::lstm && prev.c.size() != spec.hidden_dim)
        throw contract_error("lstm cell state size mismatch");
}

}  // namespace

CellState cell_forward(const CellSpec& spec, const ParamStore& params, const std::string& prefix,
                       const CellState& prev, const Vec& x, CellCache* cache) {
    check_dims(spec, prev, x);
    CellState next;
    if (spec.kind == CellKind::gru) {
        const Vec z = sigmoid(params.value(prefix + "Wz") * x +
                              params.value(prefix + "Uz") * prev.h +
                              params.value(prefix + "bz").col(0));
        const Vec r = sigmoid(params.value(prefix + "Wr") * x +
                              params.value(prefix + "Ur") * prev.h +
                              params.value(prefix + "br").col(0));
        const Vec rh = r.cwiseProduct(prev.h);
        const Vec n = (params.value(prefix + "Wn") * x + params.value(prefix + "Un") * rh +
                       params.value(prefix + "bn").col(0))
                          .array()
                          .tanh();
        next.h = (1.0 - z.array()).matrix().cwiseProduct(prev.h) + z.cwiseProduct(n);
        if (cache) {
            cache->x = x;
            cache->h_prev = prev.h;
            cache->z = z;
            cache->r = r;
            cache->n = n;
        }
    } else {
        const Vec i = sigmoid(params.value(prefix + "Wi") * x +
                              params.value(prefix + "Ui") * prev.h +
                              params.value(prefix + "bi").col(0));
        const Vec f = sigmoid(params.value(prefix + "Wf") * x +
                              params.value(prefix + "Uf") * prev.h +
                              params.value(prefix + "bf").col(0));
        const Vec g = (params.value(prefix + "Wg") * x + params.value(prefix + "Ug") * prev.h +
                       params.value(prefix + "bg").col(0))
                          .array()
                          .tanh();
        const Vec o = sigmoid(params.value(prefix + "Wo") * x +
                              params.value(prefix + "Uo") * prev.h +
                              params.value(prefix + "bo").col(0));
        next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
        const Vec tc = next.c.array().tanh().matrix();
        next.h = o.cwiseProduct(tc);
        if (cache) {
            cache->x = x;
            cache->h_prev = prev.h;
            cache->c_prev = prev.c;
            cache->i = i;
            cache->f = f;
            cache->g = g;
            cache->o = o;
            cache->c = next.c;
            cache->tanh_c = tc;
        }
    }
    return next;
}

void cell_backward(const CellSpec& spec, ParamStore& params, const std::string& prefix,
                   const CellCache& cache, Vec& dh, Vec& dc, Vec* dx) {
    if (dh.size() != spec.hidden_dim) throw contract_error("cell_backward: dh size mismatch");
    Vec dx_local = Vec::Zero(spec.input_dim);
    if (spec.kind == CellKind::gru) {
        const Vec& h_prev = cache.h_prev;
        const Vec dz = dh.cwiseProduct(cache.n - h_prev);
        const Vec dn = dh.cwiseProduct(cache.z);
        Vec dh_prev = dh.cwiseProduct((1.0 - cache.z.array()).matrix());

        const Vec dan = dn.cwiseProduct((1.0 - cache.n.array().square()).matrix());
        params.grad(prefix + "Wn") += dan * cache.x.transpose();
        params.grad(prefix + "Un") += dan * cache.r.cwiseProduct(h_prev).transpose();
        params.grad(prefix + "bn").col(0) += dan;
        const Vec drh = params.value(prefix + "Un").transpose() * dan;
        const Vec dr = drh.cwiseProduct(h_prev);
        dh_prev += drh.cwiseProduct(cache.r);

        const Vec dar =
            dr.cwiseProduct(cache.r.cwiseProduct((1.0 - cache.r.array()).matrix()));
        params.grad(prefix + "Wr") += dar * cache.x.transpose();
        params.grad(prefix + "Ur") += dar * h_prev.transpose();
        params.grad(prefix + "br").col(0) += dar;
        dh_prev += params.value(prefix + "Ur").transpose() * dar;

        const Vec daz =
            dz.cwiseProduct(cache.z.cwiseProduct((1.0 - cache.z.array()).matrix()));
        params.grad(prefix + "Wz") += daz * cache.x.transpose();
        params.grad(prefix + "Uz") += daz * h_prev.transpose();
        params.grad(prefix + "bz").col(0) += daz;
        dh_prev += params.value(prefix + "Uz").transpose() * daz;

        dx_local = params.value(prefix + "Wz").transpose() * daz +
                   params.value(prefix + "Wr").transpose() * dar +
                   params.value(prefix + "Wn").transpose() * dan;
        dh = dh_prev;
    } else {
        if (dc.size() != spec.hidden_dim) dc = Vec::Zero(spec.hidden_dim);
        const Vec do_ = dh.cwiseProduct(cache.tanh_c);
        const Vec dcc =
            dc + dh.cwiseProduct(cache.o)
                     .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
        const Vec df = dcc.cwiseProduct(cache.c_prev);
        const Vec di = dcc.cwiseProduct(cache.g);
        const Vec dg = dcc.cwiseProduct(cache.i);
        dc = dcc.cwiseProduct(cache.f);  // gradient w.r.t. c_prev

        Vec dh_prev = Vec::Zero(spec.hidden_dim);
        struct GateGrad {
            const char* gate;
            Vec da;
        };
        const GateGrad gate_grads[] = {
            {"i", di.cwiseProduct(cache.i.cwiseProduct((1.0 - cache.i.array()).matrix()))},
            {"f", df.cwiseProduct(cache.f.cwiseProduct((1.0 - cache.f.array()).matrix()))},
            {"g", dg.cwiseProduct((1.0 - cache.g.array().square()).matrix())},
            {"o", do_.cwiseProduct(cache.o.cwiseProduct((1.0 - cache.o.array()).matrix()))},
        };
        for (const auto& gg : gate_grads) {
            params.grad(prefix + "W" + gg.gate) += gg.da * cache.x.transpose();
            params.grad(prefix + "U" + gg.gate) += gg.da * cache.h_prev.transpose();
            params.grad(prefix + "b" + gg.gate).col(0) += gg.da;
            dh_prev += params.value(prefix + "U" + gg.gate).transpose() * gg.da;
            dx_local += params.value(prefix + "W" + gg.gate).transpose() * gg.da;
        }
        dh = dh_prev;
    }
    if (dx) *dx = std::move(dx_local);
}

std::vector<Vec> cell_seq_forward(const CellSpec& spec, const ParamStore& params,
                                  const std::string& prefix, std::span<const Vec> xs,
                                  CellTape* tape) {
    std::vector<Vec> hs;
    hs.reserve(xs.size());
    if (tape) {
        tape->steps.clear();
        tape->steps.resize(xs.size());
    }
    CellState state = zero_state(spec);
    for (std::size_t t = 0; t < xs.size(); ++t) {
        state = cell_forward(spec, params, prefix, state, xs[t],
                             tape ? &tape->steps[t] : nullptr);
        hs.push_back(state.h);
    }
    return hs;
}

void cell_seq_backward(const CellSpec& spec, ParamStore& params, const std::string& prefix,
                       const CellTape& tape, std::span<const Vec> dh_steps,
                       std::vector<Vec>* dxs) {
    if (tape.steps.size() != dh_steps.size())
        throw contract_error("cell_seq_backward: tape and upstream gradient lengths differ (" +
                             std::to_string(tape.steps.size()) + " vs " +
                             std::to_string(dh_steps.size()) + ")");
    if (dxs) dxs->assign(tape.steps.size(), Vec());
    Vec dh = Vec::Zero(spec.hidden_dim);
    Vec dc = Vec::Zero(spec.hidden_dim);
    for (std::size_t t = tape.steps.size(); t-- > 0;) {
        dh += dh_steps[t];
        Vec dx;
        cell_backward(spec, params, prefix, tape.steps[t], dh, dc, dxs ? &dx : nullptr);
        if (dxs) (*dxs)[t] = std::move(dx);
    }
}

void add_dense_params(ParamStore& params, const std::string& prefix, const DenseSpec& spec) {
    if (spec.input_dim < 1 || spec.output_dim < 1)
        throw validation_error("dense dims must be >= 1");
    params.add_weight(prefix + "W", spec.output_dim, spec.input_dim);
    params.add_bias(prefix + "b", spec.output_dim);
}

Vec dense_forward(const DenseSpec& spec, const ParamStore& params, const std::string& prefix,
                  const Vec& x, DenseCache* cache) {
    if (x.size() != spec.input_dim)
        throw contract_error("dense input size " + std::to_string(x.size()) +
                             " != spec input_dim " + std::to_string(spec.input_dim));
    Vec y = params.value(prefix + "W") * x + params.value(prefix + "b").col(0);
    switch (spec.act) {
        case Activation::none: break;
        case Activation::tanh: y = y.array().tanh(); break;
        case Activation::relu: y = y.cwiseMax(0.0); break;
        case Activation::softmax: {
            const double m = y.maxCoeff();
            Vec e = (y.array() - m).exp();
            y = e / e.sum();
            break;
        }
    }
    if (cache) {
        cache->x = x;
        cache->y = y;
    }
    return y;
}

Vec dense_backward(const DenseSpec& spec, ParamStore& params, const std::string& prefix,
                   const DenseCache& cache, const Vec& dy) {
    if (dy.size() != spec.output_dim) throw contract_error("dense_backward: dy size mismatch");
    Vec du;
    switch (spec.act) {
        case Activation::none: du = dy; break;
        case Activation::tanh:
            du = dy.cwiseProduct((1.0 - cache.y.array().square()).matrix());
            break;
        case Activation::relu:
            du = (cache.y.array() > 0.0).select(dy.array(), 0.0).matrix();
            break;
        case Activation::softmax: {
            const double dot = cache.y.dot(dy);
            du = cache.y.cwiseProduct((dy.array() - dot).matrix());
            break;
        }
    }
    params.grad(prefix + "W") += du * cache.x.transpose();
    params.grad(prefix + "b").col(0) += du;
    return params.value(prefix + "W").transpose() * du;
}

}  // namespace qtlab
