#pragma once

#include <array>
#include <map>
#include <string_view>
#include <vector>

#include "rangevol/market_data.hpp"

namespace rangevol {

enum class EstimatorKind {
    CloseToClose,
    Parkinson,
    GarmanKlass,
    RogersSatchell,
    YangZhang,
};

inline constexpr std::array<EstimatorKind, 5> kAllEstimators = {
    EstimatorKind::CloseToClose, EstimatorKind::Parkinson, EstimatorKind::GarmanKlass,
    EstimatorKind::RogersSatchell, EstimatorKind::YangZhang,
};

std::string_view estimator_name(EstimatorKind kind);  // "close_to_close", "parkinson", ...
EstimatorKind estimator_from_name(std::string_view name);  // throws std::invalid_argument

struct VolParams {
    int window = 21;      // N, rolling window in days
    double scale = 252.0; // F, time-unit scaling; output carries a sqrt(F) factor

    void validate() const;  // window >= 2, scale > 0
};

// Rolling-window volatility estimates, one value per window, dated at the
// window's last day, stride 1.
struct VolSeries {
    EstimatorKind kind{};
    VolParams params;
    std::vector<Date> dates;
    std::vector<double> sigma;
    std::size_t clamp_count = 0;  // windows whose (negative) radicand was clamped to 0

    std::size_t size() const { return sigma.size(); }
};

// sqrt(F) * sample stdev (divisor N-1, mean subtracted) of N log close returns
// per window. Needs N+1 bars.
VolSeries close_to_close(const OhlcSeries& series, VolParams params);

// sqrt(F) * sqrt( sum ln(H/L)^2 / (4 ln2 N) ). Needs N bars.
VolSeries parkinson(const OhlcSeries& series, VolParams params);

// sqrt(F) * sqrt( sum [0.5 ln(H/L)^2 - (2 ln2 - 1) ln(C/O)^2] / N ); a window
// whose sum goes negative is clamped to 0 and counted. Needs N bars.
VolSeries garman_klass(const OhlcSeries& series, VolParams params);

// sqrt(F) * sqrt( sum [u(u-c) + d(d-c)] / N ) with u = ln(H/O), d = ln(L/O),
// c = ln(C/O); each summand is >= 0 for a valid bar. Needs N bars.
VolSeries rogers_satchell(const OhlcSeries& series, VolParams params);

// sqrt(F) * sqrt( V_overnight + k V_openclose + (1-k) V_rs ) with
// k = 0.34 / (1.34 + (N+1)/(N-1)); overnight/open-close terms are sample
// variances (divisor N-1, window mean subtracted), V_rs the N-divisor
// Rogers-Satchell sum. Needs N+1 bars.
VolSeries yang_zhang(const OhlcSeries& series, VolParams params);

double yang_zhang_k(int window);

// All five estimators trimmed to the common date range (every series starts at
// bar index N, the first day close_to_close/yang_zhang can produce), so
// downstream labels align across estimators.
std::map<EstimatorKind, VolSeries> compute_all(const OhlcSeries& series, VolParams params);

// "date,sigma" CSV export for plotting.
void write_vol_csv(const std::filesystem::path& path, const VolSeries& series);

}  // namespace rangevol
