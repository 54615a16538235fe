#include "rangevol/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rangevol {

namespace {

double uniform53(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Seeded Fisher-Yates; avoids the standard library's unspecified
// uniform_int_distribution so shuffles are reproducible everywhere.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng() % i]);
}

void fill_batch(const DirectionDataset& data, const std::vector<std::size_t>& order,
                std::size_t first, int batch, std::vector<Mat>& inputs, Vec& targets) {
    const int T = data.window_len;
    for (int b = 0; b < batch; ++b) {
        const std::size_t start = order[first + static_cast<std::size_t>(b)];
        for (int t = 0; t < T; ++t)
            inputs[static_cast<std::size_t>(t)](0, b) =
                static_cast<double>(data.labels[start + static_cast<std::size_t>(t)]);
        targets[b] = static_cast<double>(data.target(start));
    }
}

double batch_loss_sum(const Vec& z, const Vec& targets) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        sum += bce_loss_from_logit(z[i], targets[i] > 0.5 ? 1 : 0);
    return sum;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("dropout_p must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (patience < 0 || patience > max_epochs)
        throw std::invalid_argument("patience must be in [0, max_epochs]");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be > 0");
}

void adam_update(Vec& theta, const Vec& grad, AdamState& state, const TrainConfig& config) {
    if (theta.size() != grad.size() || state.m.size() != theta.size() ||
        state.v.size() != theta.size())
        throw std::invalid_argument("adam_update: shape mismatch");
    state.t += 1;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    state.m.array() = b1 * state.m.array() + (1.0 - b1) * grad.array();
    state.v.array() = b2 * state.v.array() + (1.0 - b2) * grad.array().square();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    theta.array() -=
        config.learning_rate * (state.m.array() / c1) /
        ((state.v.array() / c2).sqrt() + config.adam_eps);
}

double bce_loss(double p, int y) {
    p = std::clamp(p, 1e-15, 1.0 - 1e-15);
    return -(y == 1 ? std::log(p) : std::log(1.0 - p));
}

double bce_loss_from_logit(double z, int y) {
    return std::max(z, 0.0) - z * static_cast<double>(y) + std::log1p(std::exp(-std::abs(z)));
}

DropoutMasks sample_dropout_masks(const RnnModel& model, double dropout_p, std::mt19937_64& rng) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw std::invalid_argument("dropout_p must be in [0,1)");
    DropoutMasks masks;
    masks.layer_out.resize(static_cast<std::size_t>(model.n_layers()));
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    for (int l = 0; l < model.n_layers(); ++l) {
        Vec& m = masks.layer_out[static_cast<std::size_t>(l)];
        m.resize(model.hidden(l));
        for (Eigen::Index j = 0; j < m.size(); ++j)
            m[j] = (dropout_p > 0.0 && uniform53(rng) < dropout_p) ? 0.0 : keep_scale;
    }
    return masks;
}

void sample_batch_masks(double dropout_p, std::mt19937_64& rng, BatchMasks& masks) {
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    const auto B = masks.layer_out.front().cols();
    for (Eigen::Index b = 0; b < B; ++b)
        for (Mat& m : masks.layer_out)
            for (Eigen::Index j = 0; j < m.rows(); ++j)
                m(j, b) = (dropout_p > 0.0 && uniform53(rng) < dropout_p) ? 0.0 : keep_scale;
}

namespace {

// Inference-mode probabilities over arbitrary window starts, chunked to bound
// tape memory.
void predict_into(const RnnModel& model, const DirectionDataset& data,
                  const std::vector<std::size_t>& starts, std::vector<double>& out) {
    out.clear();
    out.reserve(starts.size());
    const int T = data.window_len;
    constexpr std::size_t kChunk = 1024;
    BatchTape tape;
    std::vector<Mat> inputs(static_cast<std::size_t>(T));
    Vec targets;
    for (std::size_t first = 0; first < starts.size(); first += kChunk) {
        const int B = static_cast<int>(std::min(kChunk, starts.size() - first));
        for (auto& m : inputs) m.resize(1, B);
        targets.resize(B);
        fill_batch(data, starts, first, B, inputs, targets);
        tape.resize(model, T, B);
        const Vec& p = forward_batch(model, inputs, nullptr, tape);
        for (Eigen::Index i = 0; i < p.size(); ++i) out.push_back(p[i]);
    }
}

}  // namespace

std::vector<double> predict(const RnnModel& model, const DirectionDataset& data,
                            const std::vector<std::size_t>& starts) {
    std::vector<double> out;
    predict_into(model, data, starts, out);
    return out;
}

double mean_bce(const RnnModel& model, const DirectionDataset& data,
                const std::vector<std::size_t>& starts) {
    if (starts.empty()) throw std::invalid_argument("mean_bce: empty partition");
    std::vector<double> p;
    predict_into(model, data, starts, p);
    double sum = 0.0;
    for (std::size_t i = 0; i < starts.size(); ++i)
        sum += bce_loss(p[i], data.target(starts[i]));
    return sum / static_cast<double>(starts.size());
}

TrainReport train(RnnModel& model, const DirectionDataset& data, const TrainConfig& config) {
    config.validate();
    if (model.input_size() != 1)
        throw std::invalid_argument("train: model must take one feature per day");
    if (data.train.empty() || data.val.empty() || data.test.empty())
        throw std::invalid_argument("train: dataset partitions must be non-empty");

    const int T = data.window_len;
    const std::size_t n_train = data.train.size();
    const int full_b = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n_train));
    const int rest_b = static_cast<int>(n_train % static_cast<std::size_t>(full_b));

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order = data.train;

    // Preallocated tapes/buffers for the two batch widths in play.
    BatchTape tape_full, tape_rest;
    tape_full.resize(model, T, full_b);
    std::vector<Mat> inputs_full(static_cast<std::size_t>(T), Mat(1, full_b));
    Vec targets_full(full_b);
    BatchMasks masks_full;
    std::vector<Mat> inputs_rest;
    Vec targets_rest;
    BatchMasks masks_rest;
    for (int l = 0; l < model.n_layers(); ++l)
        masks_full.layer_out.emplace_back(model.hidden(l), full_b);
    if (rest_b > 0) {
        tape_rest.resize(model, T, rest_b);
        inputs_rest.assign(static_cast<std::size_t>(T), Mat(1, rest_b));
        targets_rest.resize(rest_b);
        for (int l = 0; l < model.n_layers(); ++l)
            masks_rest.layer_out.emplace_back(model.hidden(l), rest_b);
    }

    Vec grad(model.n_params());
    AdamState adam(model.n_params());
    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    Vec best_theta = model.params();
    int bad_streak = 0;
    const int stop_after = std::max(config.patience, 1);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        double loss_sum = 0.0;

        for (std::size_t first = 0; first < n_train;) {
            const bool full = first + static_cast<std::size_t>(full_b) <= n_train;
            const int B = full ? full_b : rest_b;
            BatchTape& tape = full ? tape_full : tape_rest;
            std::vector<Mat>& inputs = full ? inputs_full : inputs_rest;
            Vec& targets = full ? targets_full : targets_rest;
            BatchMasks& masks = full ? masks_full : masks_rest;

            fill_batch(data, order, first, B, inputs, targets);
            const BatchMasks* mask_ptr = nullptr;
            if (config.dropout_p > 0.0) {
                sample_batch_masks(config.dropout_p, rng, masks);
                mask_ptr = &masks;
            }
            forward_batch(model, inputs, mask_ptr, tape);
            loss_sum += batch_loss_sum(tape.z, targets);
            backward_batch(model, tape, targets, grad);
            adam_update(model.params(), grad, adam, config);
            first += static_cast<std::size_t>(B);
        }

        const double train_loss = loss_sum / static_cast<double>(n_train);
        const double val_loss = mean_bce(model, data, data.val);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        report.train_loss.push_back(train_loss);
        report.val_loss.push_back(val_loss);
        report.epochs_run = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_theta = model.params();
            report.best_epoch = epoch;
            bad_streak = 0;
        } else {
            ++bad_streak;
            if (bad_streak >= stop_after) {
                report.stopped_early = true;
                break;
            }
        }
    }

    model.params() = best_theta;
    return report;
}

void write_loss_curve_csv(const std::filesystem::path& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss,val_loss\n";
    char buf[96];
    for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1, report.train_loss[i],
                      report.val_loss[i]);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace rangevol
