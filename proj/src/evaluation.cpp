#include "rangevol/evaluation.hpp"

#include <cmath>
#include <stdexcept>

namespace rangevol {

std::string_view regime_name(Regime regime) {
    switch (regime) {
        case Regime::Default: return "default";
        case Regime::Lowered: return "lowered";
        case Regime::Confident: return "confident";
    }
    throw std::invalid_argument("unknown regime");
}

void RegimeParams::validate() const {
    for (double v : {lowered_threshold, band_low, band_high})
        if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("regime thresholds must be in (0,1)");
    if (!(band_low < band_high))
        throw std::invalid_argument("confidence band must have band_low < band_high");
}

std::optional<int> decide(double p, Regime regime, const RegimeParams& params) {
    switch (regime) {
        case Regime::Default:
            return p >= 0.5 ? 1 : 0;
        case Regime::Lowered:
            return p >= params.lowered_threshold ? 1 : 0;
        case Regime::Confident:
            if (p >= params.band_low && p <= params.band_high) return std::nullopt;
            return p > params.band_high ? 1 : 0;
    }
    throw std::invalid_argument("unknown regime");
}

Confusion count_confusion(const std::vector<int>& preds, const std::vector<int>& truth) {
    if (preds.size() != truth.size())
        throw std::invalid_argument("count_confusion: length mismatch");
    if (preds.empty()) throw std::invalid_argument("count_confusion: empty input");
    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == 1)
            (truth[i] == 1 ? c.tp : c.fp)++;
        else
            (truth[i] == 1 ? c.fn : c.tn)++;
    }
    return c;
}

Metrics metrics_from(const Confusion& c) {
    if (c.total() == 0) throw std::invalid_argument("metrics_from: no predictions");
    Metrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        m.precision_defined = true;
    }
    if (c.tp + c.fn > 0) {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        m.recall_defined = true;
    }
    if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        m.f1_defined = true;
    }
    return m;
}

RegimeResult evaluate_regime(const std::vector<double>& probs, const std::vector<int>& truth,
                             Regime regime, const RegimeParams& params) {
    if (probs.size() != truth.size())
        throw std::invalid_argument("evaluate_regime: length mismatch");
    if (probs.empty()) throw std::invalid_argument("evaluate_regime: empty input");
    params.validate();

    std::vector<int> kept_preds, kept_truth;
    kept_preds.reserve(probs.size());
    kept_truth.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (const auto d = decide(probs[i], regime, params)) {
            kept_preds.push_back(*d);
            kept_truth.push_back(truth[i]);
        }
    }

    RegimeResult out;
    out.total = probs.size();
    out.kept = kept_preds.size();
    out.keep_ratio = static_cast<double>(out.kept) / static_cast<double>(out.total);
    if (!kept_preds.empty()) {
        out.counts = count_confusion(kept_preds, kept_truth);
        out.metrics = metrics_from(out.counts);
    }
    return out;  // all-dropped case: keep_ratio 0 with flagged zero metrics
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_std: empty input");
    MeanStd out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

Aggregate aggregate(const std::vector<RegimeResult>& per_ticker) {
    if (per_ticker.empty()) throw std::invalid_argument("aggregate: no tickers");
    std::vector<double> acc, prec, rec, f1, keep;
    for (const RegimeResult& r : per_ticker) {
        acc.push_back(r.metrics.accuracy);
        prec.push_back(r.metrics.precision);
        rec.push_back(r.metrics.recall);
        f1.push_back(r.metrics.f1);
        keep.push_back(r.keep_ratio);
    }
    Aggregate out;
    out.accuracy = mean_std(acc);
    out.precision = mean_std(prec);
    out.recall = mean_std(rec);
    out.f1 = mean_std(f1);
    out.keep_ratio = mean_std(keep);
    out.n = per_ticker.size();
    return out;
}

CorrelationReport correlation_report(const std::map<EstimatorKind, VolSeries>& vols) {
    if (vols.size() != kAllEstimators.size())
        throw std::invalid_argument("correlation_report: need all five estimator series");
    const std::size_t len = vols.begin()->second.size();
    if (len < 3) throw std::invalid_argument("correlation_report: need >= 3 aligned points");
    for (const auto& [kind, vs] : vols) {
        if (vs.size() != len || vs.dates != vols.begin()->second.dates)
            throw std::invalid_argument("correlation_report: series not aligned");
    }

    std::array<const VolSeries*, 5> series{};
    for (std::size_t i = 0; i < kAllEstimators.size(); ++i)
        series[i] = &vols.at(kAllEstimators[i]);

    std::array<double, 5> mean{};
    std::array<double, 5> ss{};
    for (std::size_t i = 0; i < 5; ++i) {
        for (double v : series[i]->sigma) mean[i] += v;
        mean[i] /= static_cast<double>(len);
        for (double v : series[i]->sigma) ss[i] += (v - mean[i]) * (v - mean[i]);
    }

    CorrelationReport rep;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            if (i == j) {
                rep.r[i][j] = 1.0;
                rep.defined[i][j] = ss[i] > 0.0;
                continue;
            }
            if (ss[i] <= 0.0 || ss[j] <= 0.0) {
                rep.r[i][j] = 0.0;
                rep.defined[i][j] = false;  // zero-variance series, flagged
                continue;
            }
            double cov = 0.0;
            for (std::size_t t = 0; t < len; ++t)
                cov += (series[i]->sigma[t] - mean[i]) * (series[j]->sigma[t] - mean[j]);
            rep.r[i][j] = cov / std::sqrt(ss[i] * ss[j]);
            rep.defined[i][j] = true;
            rep.min_defined_entry = std::min(rep.min_defined_entry, rep.r[i][j]);
        }
    }
    return rep;
}

}  // namespace rangevol
