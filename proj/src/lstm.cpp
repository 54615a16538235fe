#include "rangevol/lstm.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace rangevol {

namespace {

// 53-bit uniform in [0,1); keeps init streams independent of the standard
// library's distribution internals.
double uniform53(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

RnnModel::RnnModel(CellKind kind, int input_size, std::vector<int> hidden_sizes)
    : kind_(kind), input_size_(input_size), hidden_(std::move(hidden_sizes)) {
    if (input_size_ < 1) throw std::invalid_argument("RnnModel: input_size must be >= 1");
    if (hidden_.empty()) throw std::invalid_argument("RnnModel: need at least one layer");
    for (int h : hidden_)
        if (h < 1) throw std::invalid_argument("RnnModel: hidden sizes must be >= 1");

    Eigen::Index off = 0;
    offsets_.resize(hidden_.size());
    for (int l = 0; l < n_layers(); ++l) {
        const Eigen::Index rows = gate_rows(l);
        offsets_[static_cast<std::size_t>(l)].w = off;
        off += rows * layer_input(l);
        offsets_[static_cast<std::size_t>(l)].u = off;
        off += rows * hidden(l);
        offsets_[static_cast<std::size_t>(l)].b = off;
        off += rows;
    }
    head_w_off_ = off;
    off += top_hidden();
    head_b_off_ = off;
    off += 1;
    theta_ = Vec::Zero(off);
}

void RnnModel::init_weights(std::uint64_t seed) {
    init_seed_ = seed;
    std::mt19937_64 rng(seed);
    theta_.setZero();
    for (int l = 0; l < n_layers(); ++l) {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden(l)));
        const auto off = offsets_[static_cast<std::size_t>(l)];
        const Eigen::Index n_w = static_cast<Eigen::Index>(gate_rows(l)) * layer_input(l);
        const Eigen::Index n_u = static_cast<Eigen::Index>(gate_rows(l)) * hidden(l);
        for (Eigen::Index i = 0; i < n_w; ++i) theta_[off.w + i] = s * (2.0 * uniform53(rng) - 1.0);
        for (Eigen::Index i = 0; i < n_u; ++i) theta_[off.u + i] = s * (2.0 * uniform53(rng) - 1.0);
        if (kind_ == CellKind::Lstm)
            theta_.segment(off.b + hidden(l), hidden(l)).setOnes();  // forget-gate bias
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(top_hidden()));
    for (int i = 0; i < top_hidden(); ++i)
        theta_[head_w_off_ + i] = s * (2.0 * uniform53(rng) - 1.0);
    theta_[head_b_off_] = 0.0;
}

Eigen::Map<const Mat> RnnModel::W(int layer) const {
    const auto off = offsets_[static_cast<std::size_t>(layer)];
    return {theta_.data() + off.w, gate_rows(layer), layer_input(layer)};
}

Eigen::Map<const Mat> RnnModel::U(int layer) const {
    const auto off = offsets_[static_cast<std::size_t>(layer)];
    return {theta_.data() + off.u, gate_rows(layer), hidden(layer)};
}

Eigen::Map<const Vec> RnnModel::b(int layer) const {
    const auto off = offsets_[static_cast<std::size_t>(layer)];
    return {theta_.data() + off.b, gate_rows(layer)};
}

Eigen::Map<const Vec> RnnModel::head_w() const {
    return {theta_.data() + head_w_off_, top_hidden()};
}

// --- single-step operations -------------------------------------------------

Vec vanilla_step(const Mat& W, const Mat& U, const Vec& b, const Vec& x, const Vec& h_prev) {
    if (W.rows() != U.rows() || U.rows() != U.cols() || W.rows() != b.size() ||
        W.cols() != x.size() || U.cols() != h_prev.size())
        throw std::invalid_argument("vanilla_step: shape mismatch");
    return (W * x + U * h_prev + b).array().tanh().matrix();
}

LstmState lstm_step(const Mat& W4, const Mat& U4, const Vec& b4, const Vec& x,
                    const LstmState& prev) {
    const Eigen::Index h = U4.cols();
    if (W4.rows() != 4 * h || U4.rows() != 4 * h || b4.size() != 4 * h ||
        W4.cols() != x.size() || prev.h.size() != h || prev.c.size() != h)
        throw std::invalid_argument("lstm_step: shape mismatch");
    if (!x.allFinite() || !prev.h.allFinite() || !prev.c.allFinite())
        throw std::invalid_argument("lstm_step: non-finite input");

    const Vec pre = W4 * x + U4 * prev.h + b4;
    const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    LstmState next{Vec(h), Vec(h)};
    for (Eigen::Index j = 0; j < h; ++j) {
        const double i = sig(pre[j]);
        const double f = sig(pre[h + j]);
        const double o = sig(pre[2 * h + j]);
        const double g = std::tanh(pre[3 * h + j]);
        next.c[j] = f * prev.c[j] + i * g;
        next.h[j] = o * std::tanh(next.c[j]);
    }
    return next;
}

// --- batched forward/backward -----------------------------------------------

void BatchTape::resize(const RnnModel& model, int steps, int batch) {
    steps_ = steps;
    batch_ = batch;
    layers_ = model.n_layers();
    const bool lstm = model.cell() == CellKind::Lstm;
    const std::size_t cells = static_cast<std::size_t>(steps) * static_cast<std::size_t>(layers_);

    x0_.resize(static_cast<std::size_t>(steps));
    for (auto& m : x0_) m.resize(model.input_size(), batch);

    for (auto* v : {&gi_, &gf_, &go_, &gg_, &c_, &tanhc_, &h_}) v->resize(cells);
    for (int t = 0; t < steps; ++t)
        for (int l = 0; l < layers_; ++l) {
            const std::size_t k = idx(t, l);
            h_[k].resize(model.hidden(l), batch);
            if (lstm) {
                for (auto* v : {&gi_, &gf_, &go_, &gg_, &c_, &tanhc_})
                    (*v)[k].resize(model.hidden(l), batch);
            }
        }

    const std::size_t L = static_cast<std::size_t>(layers_);
    pre.resize(L);
    xmask.resize(L);
    dh.resize(L);
    dc.resize(L);
    dpre.resize(L);
    dx.resize(L);
    for (int l = 0; l < layers_; ++l) {
        pre[static_cast<std::size_t>(l)].resize(model.gate_rows(l), batch);
        xmask[static_cast<std::size_t>(l)].resize(model.hidden(l), batch);
        dh[static_cast<std::size_t>(l)].resize(model.hidden(l), batch);
        dc[static_cast<std::size_t>(l)].resize(lstm ? model.hidden(l) : 0, lstm ? batch : 0);
        dpre[static_cast<std::size_t>(l)].resize(model.gate_rows(l), batch);
        dx[static_cast<std::size_t>(l)].resize(model.layer_input(l), batch);
    }
    head_in.resize(model.top_hidden(), batch);
    z.resize(batch);
    p.resize(batch);
    dz.resize(batch);
    masks = nullptr;
}

const Vec& forward_batch(const RnnModel& model, const std::vector<Mat>& inputs,
                         const BatchMasks* masks, BatchTape& tape) {
    if (inputs.empty()) throw std::invalid_argument("forward_batch: empty window");
    const int T = static_cast<int>(inputs.size());
    const int L = model.n_layers();
    const auto B = inputs.front().cols();
    if (inputs.front().rows() != model.input_size())
        throw std::invalid_argument("forward_batch: input size mismatch");
    if (tape.steps() != T || tape.batch() != static_cast<int>(B))
        throw std::invalid_argument("forward_batch: tape not sized for this batch");
    if (masks && static_cast<int>(masks->layer_out.size()) != L)
        throw std::invalid_argument("forward_batch: mask/layer mismatch");
    const bool lstm = model.cell() == CellKind::Lstm;
    tape.masks = masks;

    for (int t = 0; t < T; ++t) {
        assert(inputs[static_cast<std::size_t>(t)].rows() == model.input_size() &&
               inputs[static_cast<std::size_t>(t)].cols() == B);
        tape.x0(t) = inputs[static_cast<std::size_t>(t)];
        const Mat* x = &tape.x0(t);
        for (int l = 0; l < L; ++l) {
            const int h = model.hidden(l);
            Mat& pre = tape.pre[static_cast<std::size_t>(l)];
            pre.noalias() = model.W(l) * (*x);
            if (t > 0) pre.noalias() += model.U(l) * tape.h(t - 1, l);
            pre.colwise() += model.b(l);

            if (lstm) {
                tape.gate_i(t, l).array() = 1.0 / (1.0 + (-pre.topRows(h).array()).exp());
                tape.gate_f(t, l).array() = 1.0 / (1.0 + (-pre.middleRows(h, h).array()).exp());
                tape.gate_o(t, l).array() = 1.0 / (1.0 + (-pre.middleRows(2 * h, h).array()).exp());
                tape.gate_g(t, l).array() = pre.middleRows(3 * h, h).array().tanh();
                Mat& c = tape.c(t, l);
                if (t > 0)
                    c.array() = tape.gate_f(t, l).array() * tape.c(t - 1, l).array() +
                                tape.gate_i(t, l).array() * tape.gate_g(t, l).array();
                else
                    c.array() = tape.gate_i(t, l).array() * tape.gate_g(t, l).array();
                tape.tanh_c(t, l).array() = c.array().tanh();
                tape.h(t, l).array() = tape.gate_o(t, l).array() * tape.tanh_c(t, l).array();
            } else {
                tape.h(t, l).array() = pre.array().tanh();
            }

            if (l + 1 < L) {
                if (masks) {
                    Mat& xm = tape.xmask[static_cast<std::size_t>(l)];
                    xm.array() = masks->layer_out[static_cast<std::size_t>(l)].array() *
                                 tape.h(t, l).array();
                    x = &xm;
                } else {
                    x = &tape.h(t, l);
                }
            }
        }
    }

    if (masks)
        tape.head_in.array() =
            masks->layer_out[static_cast<std::size_t>(L - 1)].array() * tape.h(T - 1, L - 1).array();
    else
        tape.head_in = tape.h(T - 1, L - 1);
    tape.z.noalias() = tape.head_in.transpose() * model.head_w();
    tape.z.array() += model.head_b();
    tape.p.array() = 1.0 / (1.0 + (-tape.z.array()).exp());
    return tape.p;
}

void backward_batch(const RnnModel& model, BatchTape& tape, const Vec& targets, Vec& grad) {
    const int T = tape.steps();
    const int L = model.n_layers();
    const int B = tape.batch();
    if (targets.size() != B) throw std::invalid_argument("backward_batch: target count mismatch");
    const bool lstm = model.cell() == CellKind::Lstm;
    const BatchMasks* masks = tape.masks;

    grad.resize(model.n_params());
    grad.setZero();

    // head: mean BCE over the batch, d loss / d logit = (p - y) / B
    tape.dz = (tape.p - targets) / static_cast<double>(B);
    grad.segment(model.head_w_offset(), model.top_hidden()).noalias() = tape.head_in * tape.dz;
    grad[model.head_b_offset()] = tape.dz.sum();

    for (int l = 0; l < L; ++l) {
        tape.dh[static_cast<std::size_t>(l)].setZero();
        if (lstm) tape.dc[static_cast<std::size_t>(l)].setZero();
    }
    {
        Mat& dh_top = tape.dh[static_cast<std::size_t>(L - 1)];
        dh_top.noalias() = model.head_w() * tape.dz.transpose();
        if (masks) dh_top.array() *= masks->layer_out[static_cast<std::size_t>(L - 1)].array();
    }

    for (int t = T - 1; t >= 0; --t) {
        for (int l = L - 1; l >= 0; --l) {
            const int h = model.hidden(l);
            Mat& dh = tape.dh[static_cast<std::size_t>(l)];
            Mat& dpre = tape.dpre[static_cast<std::size_t>(l)];

            if (lstm) {
                Mat& dc = tape.dc[static_cast<std::size_t>(l)];
                const Mat& gi = tape.gate_i(t, l);
                const Mat& gf = tape.gate_f(t, l);
                const Mat& go = tape.gate_o(t, l);
                const Mat& gg = tape.gate_g(t, l);
                const Mat& th = tape.tanh_c(t, l);

                dc.array() += dh.array() * go.array() * (1.0 - th.array().square());
                dpre.topRows(h).array() =
                    dc.array() * gg.array() * gi.array() * (1.0 - gi.array());
                if (t > 0)
                    dpre.middleRows(h, h).array() =
                        dc.array() * tape.c(t - 1, l).array() * gf.array() * (1.0 - gf.array());
                else
                    dpre.middleRows(h, h).setZero();
                dpre.middleRows(2 * h, h).array() =
                    dh.array() * th.array() * go.array() * (1.0 - go.array());
                dpre.middleRows(3 * h, h).array() =
                    dc.array() * gi.array() * (1.0 - gg.array().square());
            } else {
                dpre.array() = dh.array() * (1.0 - tape.h(t, l).array().square());
            }

            const auto off = model.offsets(l);
            const Eigen::Index rows = model.gate_rows(l);
            const Eigen::Index nin = model.layer_input(l);
            Eigen::Map<Mat> gw(grad.data() + off.w, rows, nin);
            Eigen::Map<Mat> gu(grad.data() + off.u, rows, h);
            Eigen::Map<Vec> gb(grad.data() + off.b, rows);

            const Mat* x = nullptr;
            if (l == 0) {
                x = &tape.x0(t);
            } else if (masks) {
                Mat& xm = tape.xmask[static_cast<std::size_t>(l - 1)];
                xm.array() = masks->layer_out[static_cast<std::size_t>(l - 1)].array() *
                             tape.h(t, l - 1).array();
                x = &xm;
            } else {
                x = &tape.h(t, l - 1);
            }
            gw.noalias() += dpre * x->transpose();
            if (t > 0) gu.noalias() += dpre * tape.h(t - 1, l).transpose();
            gb += dpre.rowwise().sum();

            if (l > 0) {
                Mat& dx = tape.dx[static_cast<std::size_t>(l)];
                dx.noalias() = model.W(l).transpose() * dpre;
                if (masks) dx.array() *= masks->layer_out[static_cast<std::size_t>(l - 1)].array();
                tape.dh[static_cast<std::size_t>(l - 1)] += dx;
            }
            if (t > 0) {
                dh.noalias() = model.U(l).transpose() * dpre;  // becomes dh at t-1
                if (lstm) tape.dc[static_cast<std::size_t>(l)].array() *= tape.gate_f(t, l).array();
            }
        }
    }
}

// --- single-window facade ----------------------------------------------------

double forward_sequence(const RnnModel& model, const std::vector<Vec>& window,
                        const DropoutMasks* masks, BatchTape* tape) {
    if (window.empty()) throw std::invalid_argument("forward_sequence: empty window");
    std::vector<Mat> inputs(window.size());
    for (std::size_t t = 0; t < window.size(); ++t) inputs[t] = window[t];

    BatchTape local;
    BatchTape& tp = tape ? *tape : local;
    tp.resize(model, static_cast<int>(window.size()), 1);

    const BatchMasks* bm = nullptr;
    if (masks) {
        if (static_cast<int>(masks->layer_out.size()) != model.n_layers())
            throw std::invalid_argument("forward_sequence: mask/layer mismatch");
        tp.owned_masks.layer_out.assign(masks->layer_out.begin(), masks->layer_out.end());
        bm = &tp.owned_masks;
    }
    const Vec& p = forward_batch(model, inputs, bm, tp);
    return p[0];
}

Vec backward_sequence(const RnnModel& model, BatchTape& tape, int target) {
    if (tape.batch() != 1) throw std::invalid_argument("backward_sequence: tape batch != 1");
    Vec targets(1);
    targets[0] = static_cast<double>(target);
    Vec grad;
    backward_batch(model, tape, targets, grad);
    return grad;
}

// --- serialization ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'V', 'M', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("model file truncated");
    return v;
}

}  // namespace

void RnnModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, 1);  // version
    put<std::uint32_t>(out, kind_ == CellKind::Lstm ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(input_size_));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(hidden_.size()));
    for (int h : hidden_) put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    put<std::uint64_t>(out, init_seed_);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(theta_.size()));
    out.write(reinterpret_cast<const char*>(theta_.data()),
              static_cast<std::streamsize>(sizeof(double)) * theta_.size());
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

RnnModel RnnModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path.string() + ": not a model file");
    if (get<std::uint32_t>(in) != 1)
        throw std::runtime_error(path.string() + ": unsupported model version");
    const auto cell = get<std::uint32_t>(in);
    if (cell > 1) throw std::runtime_error(path.string() + ": unknown cell kind");
    const auto input_size = static_cast<int>(get<std::uint32_t>(in));
    const auto n_layers = get<std::uint32_t>(in);
    if (n_layers == 0 || n_layers > 64) throw std::runtime_error(path.string() + ": bad layer count");
    std::vector<int> hidden(n_layers);
    for (auto& h : hidden) h = static_cast<int>(get<std::uint32_t>(in));

    RnnModel model(cell == 1 ? CellKind::Lstm : CellKind::VanillaTanh, input_size, std::move(hidden));
    model.init_seed_ = get<std::uint64_t>(in);
    const auto n_params = get<std::uint64_t>(in);
    if (n_params != static_cast<std::uint64_t>(model.n_params()))
        throw std::runtime_error(path.string() + ": parameter count mismatch");
    in.read(reinterpret_cast<char*>(model.theta_.data()),
            static_cast<std::streamsize>(sizeof(double)) * model.theta_.size());
    if (!in) throw std::runtime_error(path.string() + ": model file truncated");
    return model;
}

}  // namespace rangevol
