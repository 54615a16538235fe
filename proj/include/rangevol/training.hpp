#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "rangevol/labeling.hpp"
#include "rangevol/lstm.hpp"

namespace rangevol {

struct TrainConfig {
    double learning_rate = 0.001;
    double dropout_p = 0.3;
    int batch_size = 32;
    int max_epochs = 300;
    int patience = 50;  // consecutive non-improving epochs tolerated; 0 = stop on first
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

struct AdamState {
    Vec m, v;  // first/second moment accumulators
    long t = 0;

    explicit AdamState(Eigen::Index n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
void adam_update(Vec& theta, const Vec& grad, AdamState& state, const TrainConfig& config);

// -[y ln p + (1-y) ln(1-p)]; p clamped to [1e-15, 1-1e-15] first.
double bce_loss(double p, int y);

// Same loss computed from the logit: max(z,0) - z*y + log1p(exp(-|z|)).
double bce_loss_from_logit(double z, int y);

// Inverted dropout, entries 0 with probability p else 1/(1-p); one mask vector
// per layer (applied to layer-to-layer activations and before the head only).
DropoutMasks sample_dropout_masks(const RnnModel& model, double dropout_p, std::mt19937_64& rng);

// Batched variant: column b of masks.layer_out[l] is window b's mask for layer
// l. Matrices must be presized (hidden(l) x B); columns are filled window by
// window so window b's mask stream does not depend on the batch size.
void sample_batch_masks(double dropout_p, std::mt19937_64& rng, BatchMasks& masks);

struct TrainReport {
    int epochs_run = 0;
    int best_epoch = 0;  // 1-based index into the loss curves
    std::vector<double> train_loss;  // per epoch, mean over train windows (dropout active)
    std::vector<double> val_loss;    // per epoch, inference mode
    bool stopped_early = false;
};

// Mini-batch training: per epoch, shuffle the train windows (seeded
// Fisher-Yates), walk batches of config.batch_size (final partial batch kept),
// sample fresh dropout masks per window, take one Adam step on the mean batch
// gradient; then score the validation partition without dropout. Stops after
// `patience` consecutive epochs without a strictly lower validation loss (or
// at max_epochs) and restores the best epoch's parameters into `model`.
TrainReport train(RnnModel& model, const DirectionDataset& data, const TrainConfig& config);

// Inference-mode mean BCE of the model over the given window starts.
double mean_bce(const RnnModel& model, const DirectionDataset& data,
                const std::vector<std::size_t>& starts);

// Inference-mode p for each window start, in order.
std::vector<double> predict(const RnnModel& model, const DirectionDataset& data,
                            const std::vector<std::size_t>& starts);

// "epoch,train_loss,val_loss" rows.
void write_loss_curve_csv(const std::filesystem::path& path, const TrainReport& report);

}  // namespace rangevol
