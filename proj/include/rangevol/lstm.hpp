#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace rangevol {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class CellKind {
    VanillaTanh,  // h_t = tanh(W x_t + U h_{t-1} + b)
    Lstm,         // gated cell, no peepholes
};

// Stacked recurrent binary classifier: one or more recurrent layers plus an
// affine+sigmoid head reading the top layer's final hidden state.
//
// Parameters live in one flat vector. Per-layer blocks, in order:
//   W (rows x n_in), U (rows x h), b (rows)
// where rows = 4h for Lstm (gate row blocks stacked [i; f; o; g], g the cell
// candidate) and rows = h for VanillaTanh; matrix blocks are column-major.
// After the layers come the head weights (top hidden size) and the head bias.
class RnnModel {
public:
    RnnModel() = default;
    RnnModel(CellKind kind, int input_size, std::vector<int> hidden_sizes);

    // Uniform [-1/sqrt(h), +1/sqrt(h)] weights per layer (head: 1/sqrt(top h)),
    // all biases 0 except the forget-gate block, set to 1 as a memory stabilizer.
    // Uses a private 53-bit-uniform generator so streams do not depend on the
    // standard library's distribution internals.
    void init_weights(std::uint64_t seed);

    CellKind cell() const { return kind_; }
    int input_size() const { return input_size_; }
    int n_layers() const { return static_cast<int>(hidden_.size()); }
    int hidden(int layer) const { return hidden_[static_cast<std::size_t>(layer)]; }
    int top_hidden() const { return hidden_.back(); }
    int layer_input(int layer) const {
        return layer == 0 ? input_size_ : hidden_[static_cast<std::size_t>(layer) - 1];
    }
    int gate_rows(int layer) const {
        return (kind_ == CellKind::Lstm ? 4 : 1) * hidden(layer);
    }
    std::uint64_t init_seed() const { return init_seed_; }

    Eigen::Index n_params() const { return theta_.size(); }
    Vec& params() { return theta_; }
    const Vec& params() const { return theta_; }

    struct LayerOffsets {
        Eigen::Index w = 0, u = 0, b = 0;
    };
    LayerOffsets offsets(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
    Eigen::Index head_w_offset() const { return head_w_off_; }
    Eigen::Index head_b_offset() const { return head_b_off_; }

    Eigen::Map<const Mat> W(int layer) const;
    Eigen::Map<const Mat> U(int layer) const;
    Eigen::Map<const Vec> b(int layer) const;
    Eigen::Map<const Vec> head_w() const;
    double head_b() const { return theta_[head_b_off_]; }

    bool finite() const { return theta_.allFinite(); }

    // Binary container: header (cell kind, sizes, init seed), then the flat
    // parameter vector in the block order documented above.
    void save(const std::filesystem::path& path) const;
    static RnnModel load(const std::filesystem::path& path);

private:
    CellKind kind_ = CellKind::Lstm;
    int input_size_ = 0;
    std::vector<int> hidden_;
    std::vector<LayerOffsets> offsets_;
    Eigen::Index head_w_off_ = 0;
    Eigen::Index head_b_off_ = 0;
    std::uint64_t init_seed_ = 0;
    Vec theta_;
};

// --- single-step cell operations -------------------------------------------

// tanh(W x + U h_prev + b); W is (h x n), U (h x h), b (h).
Vec vanilla_step(const Mat& W, const Mat& U, const Vec& b, const Vec& x, const Vec& h_prev);

struct LstmState {
    Vec h, c;
};

// One gated-cell step. W4/U4/b4 stack the four gate blocks [i; f; o; g]:
//   i,f,o = sigmoid(...), g = tanh(...), c = f.*c_prev + i.*g, h = o.*tanh(c).
LstmState lstm_step(const Mat& W4, const Mat& U4, const Vec& b4, const Vec& x,
                    const LstmState& prev);

// --- batched forward/backward ----------------------------------------------

// One inverted-dropout mask per layer per window (column), applied to that
// layer's output stream: the input of the layer above at every time step, and
// for the top layer the head input at the final step. Entries are 0 or
// 1/(1-p). The hidden-state recurrence is never masked, and the raw features
// entering layer 0 are not masked.
struct BatchMasks {
    std::vector<Mat> layer_out;  // n_layers entries, each hidden(l) x B
};

// Cached activations of one batched forward pass plus preallocated scratch so
// the train loop never allocates. Matrices are hidden(l) x B per (step, layer).
class BatchTape {
public:
    void resize(const RnnModel& model, int steps, int batch);

    int steps() const { return steps_; }
    int batch() const { return batch_; }

    Mat& x0(int t) { return x0_[static_cast<std::size_t>(t)]; }
    Mat& gate_i(int t, int l) { return gi_[idx(t, l)]; }
    Mat& gate_f(int t, int l) { return gf_[idx(t, l)]; }
    Mat& gate_o(int t, int l) { return go_[idx(t, l)]; }
    Mat& gate_g(int t, int l) { return gg_[idx(t, l)]; }
    Mat& c(int t, int l) { return c_[idx(t, l)]; }
    Mat& tanh_c(int t, int l) { return tanhc_[idx(t, l)]; }
    Mat& h(int t, int l) { return h_[idx(t, l)]; }

    Mat head_in;  // top hidden x B, after the top mask
    Vec z;        // logits, B
    Vec p;        // sigmoid(z), B

    // masks used by the recorded forward pass; null means no dropout. Set by
    // forward_batch; forward_sequence parks its converted masks in owned_masks.
    const BatchMasks* masks = nullptr;
    BatchMasks owned_masks;

    // scratch, sized per layer
    std::vector<Mat> pre, xmask, dh, dc, dpre, dx;
    Vec dz;

private:
    std::size_t idx(int t, int l) const {
        return static_cast<std::size_t>(t) * static_cast<std::size_t>(layers_) +
               static_cast<std::size_t>(l);
    }
    int steps_ = 0, batch_ = 0, layers_ = 0;
    std::vector<Mat> x0_, gi_, gf_, go_, gg_, c_, tanhc_, h_;
};

// Runs the stacked network over `inputs` (one n_in x B matrix per time step,
// window b in column b) from zero initial states. `masks` may be null (no
// dropout: inference / mask-free training). Fills `tape` and returns tape.p.
// The tape must be resize()d to matching shapes beforehand.
const Vec& forward_batch(const RnnModel& model, const std::vector<Mat>& inputs,
                         const BatchMasks* masks, BatchTape& tape);

// Gradient of the mean binary cross entropy over the batch w.r.t. every
// parameter, written to `grad` (resized to n_params). `targets` holds one 0/1
// label per column of the forward batch.
void backward_batch(const RnnModel& model, BatchTape& tape, const Vec& targets, Vec& grad);

// --- single-window convenience (batch of one) ------------------------------

struct DropoutMasks {
    std::vector<Vec> layer_out;  // n_layers entries, each hidden(l)
};

// Probability that the window's next label is 1. Pass `tape` to keep the
// activations for backward_sequence.
double forward_sequence(const RnnModel& model, const std::vector<Vec>& window,
                        const DropoutMasks* masks = nullptr, BatchTape* tape = nullptr);

// Exact BCE gradient for the single window recorded in `tape`.
Vec backward_sequence(const RnnModel& model, BatchTape& tape, int target);

}  // namespace rangevol
