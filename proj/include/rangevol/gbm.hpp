#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rangevol/estimators.hpp"
#include "rangevol/market_data.hpp"

namespace rangevol {

// Geometric Brownian motion with discretely sampled intraday paths and
// optional lognormal overnight gaps, annualized over 252 trading days.
struct GbmConfig {
    double sigma_true = 0.2;  // annualized volatility, > 0
    double mu = 0.0;          // annualized drift
    double jump_sigma = 0.0;  // stdev of the overnight log gap (per gap), >= 0
    int steps_per_day = 1000;
    int days = 252;
    double s0 = 100.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

// Per day: one N(0, jump_sigma^2) log gap from the prior close (none when
// jump_sigma = 0, so O_t = C_{t-1} exactly), then steps_per_day log increments
// N(mu/(252 m), sigma_true^2/(252 m)). O is the post-gap price; H/L are the
// max/min over the open and every sampled intraday point; C is the last.
// Dates are consecutive weekdays from 2008-01-02.
OhlcSeries gbm_simulate(const GbmConfig& config);

struct BiasRow {
    EstimatorKind kind{};
    double mean_sigma = 0.0;  // mean over disjoint windows
    double std_error = 0.0;   // standard error of that mean
    double rel_bias = 0.0;    // mean_sigma / reference_sigma - 1
    std::size_t windows = 0;
};

struct BiasScenario {
    std::string name;
    GbmConfig config;
    // Denominator for rel_bias. For jump scenarios the natural reference is
    // the total volatility sqrt(sigma_true^2 + 252 * jump_sigma^2).
    double reference_sigma = 0.0;
};

double total_sigma(const GbmConfig& config);  // sqrt(sigma_true^2 + 252 jump_sigma^2)

// Simulates each scenario, runs all five estimators (window N, F = 252), and
// summarizes DISJOINT windows (every N-th point of the stride-1 series) so the
// standard errors are honest. config.days is bumped to cover at least
// `min_windows` disjoint windows if needed.
std::vector<std::vector<BiasRow>> bias_table(const std::vector<BiasScenario>& scenarios,
                                             int window, std::size_t min_windows);

}  // namespace rangevol
