#include "rangevol/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "rangevol/evaluation.hpp"

namespace rangevol {

void GbmConfig::validate() const {
    if (!(sigma_true > 0.0)) throw std::invalid_argument("gbm: sigma_true must be > 0");
    if (!(jump_sigma >= 0.0)) throw std::invalid_argument("gbm: jump_sigma must be >= 0");
    if (steps_per_day < 1) throw std::invalid_argument("gbm: steps_per_day must be >= 1");
    if (days < 1) throw std::invalid_argument("gbm: days must be >= 1");
    if (!(s0 > 0.0)) throw std::invalid_argument("gbm: s0 must be > 0");
    if (!std::isfinite(mu)) throw std::invalid_argument("gbm: mu must be finite");
}

OhlcSeries gbm_simulate(const GbmConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double m = static_cast<double>(config.steps_per_day);
    const double step_mu = config.mu / (252.0 * m);
    const double step_sd = config.sigma_true / std::sqrt(252.0 * m);

    OhlcSeries series;
    series.ticker = "GBM";
    series.bars.reserve(static_cast<std::size_t>(config.days));

    Date date{2008, 1, 2};
    double prev_close = config.s0;
    for (int d = 0; d < config.days; ++d) {
        OhlcBar bar;
        bar.date = date;

        double log_price = std::log(prev_close);
        if (config.jump_sigma > 0.0) log_price += config.jump_sigma * normal(rng);
        bar.open = std::exp(log_price);
        double hi = log_price, lo = log_price;
        for (int s = 0; s < config.steps_per_day; ++s) {
            log_price += step_mu + step_sd * normal(rng);
            hi = std::max(hi, log_price);
            lo = std::min(lo, log_price);
        }
        bar.high = std::exp(hi);
        bar.low = std::exp(lo);
        bar.close = std::exp(log_price);
        series.bars.push_back(bar);
        prev_close = bar.close;

        do {
            date = Date::from_serial(date.serial() + 1);
        } while (!date.is_weekday());
    }
    return series;
}

double total_sigma(const GbmConfig& config) {
    return std::sqrt(config.sigma_true * config.sigma_true +
                     252.0 * config.jump_sigma * config.jump_sigma);
}

std::vector<std::vector<BiasRow>> bias_table(const std::vector<BiasScenario>& scenarios,
                                             int window, std::size_t min_windows) {
    if (scenarios.empty()) throw std::invalid_argument("bias_table: no scenarios");
    if (window < 2) throw std::invalid_argument("bias_table: window must be >= 2");
    if (min_windows < 2) throw std::invalid_argument("bias_table: need >= 2 windows");

    std::vector<std::vector<BiasRow>> out;
    out.reserve(scenarios.size());
    for (const BiasScenario& sc : scenarios) {
        GbmConfig config = sc.config;
        const int need_days = static_cast<int>(min_windows) * window + 1;
        config.days = std::max(config.days, need_days);
        const double reference =
            sc.reference_sigma > 0.0 ? sc.reference_sigma : config.sigma_true;

        const OhlcSeries series = gbm_simulate(config);
        const auto vols = compute_all(series, VolParams{window, 252.0});

        std::vector<BiasRow> rows;
        for (EstimatorKind kind : kAllEstimators) {
            const VolSeries& vs = vols.at(kind);
            BiasRow row;
            row.kind = kind;
            // every window-th point of the stride-1 series covers disjoint bars
            std::vector<double> samples;
            for (std::size_t i = 0; i < vs.size(); i += static_cast<std::size_t>(window))
                samples.push_back(vs.sigma[i]);
            row.windows = samples.size();
            const MeanStd ms = [&] {
                double mean = 0.0;
                for (double v : samples) mean += v;
                mean /= static_cast<double>(samples.size());
                double ss = 0.0;
                for (double v : samples) ss += (v - mean) * (v - mean);
                return MeanStd{mean, std::sqrt(ss / static_cast<double>(samples.size() - 1))};
            }();
            row.mean_sigma = ms.mean;
            row.std_error = ms.stdev / std::sqrt(static_cast<double>(samples.size()));
            row.rel_bias = ms.mean / reference - 1.0;
            rows.push_back(row);
        }
        out.push_back(std::move(rows));
    }
    return out;
}

}  // namespace rangevol
