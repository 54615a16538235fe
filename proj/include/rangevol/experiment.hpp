#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rangevol/estimators.hpp"
#include "rangevol/evaluation.hpp"
#include "rangevol/training.hpp"

namespace rangevol {

// Full pipeline settings: ingest -> estimate -> label -> train -> evaluate.
// Defaults are the reference configuration (21-day volatility window, 10-day
// unrolling, 2x10 gated layers, 70/30 split with a 15% validation carve-out).
struct ExperimentConfig {
    std::filesystem::path data_dir;
    std::vector<std::string> tickers;  // empty = every *.csv in data_dir, sorted
    std::vector<EstimatorKind> estimators{kAllEstimators.begin(), kAllEstimators.end()};
    int vol_window = 21;
    double vol_scale = 252.0;  // annualization for exported series; labels don't depend on it
    int window_len = 10;       // days the network is unrolled over
    double train_frac = 0.70;
    double val_frac_of_train = 0.15;
    CellKind cell = CellKind::Lstm;
    std::vector<int> hidden_sizes{10, 10};
    TrainConfig train;  // train.seed acts as the master seed
    RegimeParams regime_params;
    int jobs = 1;
    std::filesystem::path output_dir;

    void validate() const;
};

struct RunResult {
    std::string ticker;
    EstimatorKind kind{};
    bool ok = false;
    std::string error;
    TrainReport report;
    std::map<Regime, RegimeResult> regimes;  // test-set results
};

struct ExperimentSummary {
    std::vector<RunResult> runs;  // fixed (ticker, estimator) order
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
};

// Master seed -> per-run seed via FNV-1a over (seed, ticker, estimator), so
// adding tickers or estimators never perturbs existing runs.
std::uint64_t derive_seed(std::uint64_t master, std::string_view ticker, EstimatorKind kind);

// Trains one model per (ticker, estimator); writes per-run artifacts
// (model.bin, loss_curve.csv, predictions.csv, metrics.csv), per-ticker
// volatility/correlation CSVs, aggregate tables, summary.txt and manifest.txt
// under config.output_dir. Per-run failures are recorded, not propagated; all
// files are written atomically (temp + rename).
ExperimentSummary run_experiment(const ExperimentConfig& config);

// Rebuilds the aggregate tables under out_dir from the per-run metrics.csv and
// per-ticker correlations.csv files. run_experiment itself finishes through
// this same code path, so re-running it over an untouched output directory
// reproduces the tables byte for byte. Returns the number of run rows found.
std::size_t report_aggregate(const std::filesystem::path& out_dir);

// Atomic text-file write (temp + rename).
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

// date,<one sigma column per estimator> table for a ticker's aligned series
// (the per-ticker artifact both `run` and `estimate` emit). Written atomically.
void write_vols_csv(const std::filesystem::path& path,
                    const std::map<EstimatorKind, VolSeries>& vols);

}  // namespace rangevol
