#pragma once

#include <array>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "rangevol/estimators.hpp"

namespace rangevol {

enum class Regime {
    Default,    // predict up iff p >= 0.5
    Lowered,    // predict up iff p >= threshold (0.45 by default)
    Confident,  // drop band_low <= p <= band_high, else up iff p > band_high
};

inline constexpr std::array<Regime, 3> kAllRegimes = {Regime::Default, Regime::Lowered,
                                                      Regime::Confident};

std::string_view regime_name(Regime regime);  // "default", "lowered", "confident"

struct RegimeParams {
    double lowered_threshold = 0.45;
    double band_low = 0.4;
    double band_high = 0.5;

    void validate() const;  // thresholds in (0,1), band_low < band_high
};

// nullopt = prediction discarded as unconfident (Confident regime only).
std::optional<int> decide(double p, Regime regime, const RegimeParams& params = {});

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    long total() const { return tp + fp + tn + fn; }
};

Confusion count_confusion(const std::vector<int>& preds, const std::vector<int>& truth);

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // zero-denominator ratios are reported as 0 with the flag cleared
    bool precision_defined = false;
    bool recall_defined = false;
    bool f1_defined = false;
};

Metrics metrics_from(const Confusion& counts);  // throws on zero total

struct RegimeResult {
    Metrics metrics;
    Confusion counts;
    double keep_ratio = 0.0;  // kept / total; 1 outside the Confident regime
    std::size_t kept = 0;
    std::size_t total = 0;
};

// Applies decide() to every probability, drops the discarded ones, and scores
// the rest. keep_ratio 0 (all dropped) yields flagged zero metrics.
RegimeResult evaluate_regime(const std::vector<double>& probs, const std::vector<int>& truth,
                             Regime regime, const RegimeParams& params = {});

struct MeanStd {
    double mean = 0.0;
    double stdev = 0.0;  // sample (n-1) stdev; 0 for a single value
};

struct Aggregate {
    MeanStd accuracy, precision, recall, f1, keep_ratio;
    std::size_t n = 0;
};

// Cross-ticker mean and sample stdev of each metric (flagged-0 values enter
// the average as reported, mirroring how struggling regimes are tabulated).
Aggregate aggregate(const std::vector<RegimeResult>& per_ticker);

MeanStd mean_std(const std::vector<double>& values);

struct CorrelationReport {
    std::array<std::array<double, 5>, 5> r{};      // indexed by EstimatorKind order
    std::array<std::array<bool, 5>, 5> defined{};  // false = a zero-variance series
    double min_defined_entry = 1.0;                // smallest defined off-diagonal entry
};

// Pearson correlations of the five sigma sequences; the input series must be
// aligned (as produced by compute_all) with length >= 3.
CorrelationReport correlation_report(const std::map<EstimatorKind, VolSeries>& vols);

}  // namespace rangevol
