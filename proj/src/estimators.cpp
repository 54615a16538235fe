#include "rangevol/estimators.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rangevol {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void require_bars(const OhlcSeries& series, std::size_t need, const char* what) {
    if (series.size() < need)
        throw std::invalid_argument(std::string(what) + ": series too short (" +
                                    std::to_string(series.size()) + " bars, need >= " +
                                    std::to_string(need) + ")");
}

double sample_variance(const std::vector<double>& x, std::size_t begin, std::size_t n) {
    assert(n >= 2 && begin + n <= x.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[begin + i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[begin + i] - mean;
        ss += d * d;
    }
    return ss / static_cast<double>(n - 1);
}

VolSeries make_series(EstimatorKind kind, VolParams params, std::size_t count) {
    VolSeries out;
    out.kind = kind;
    out.params = params;
    out.dates.reserve(count);
    out.sigma.reserve(count);
    return out;
}

}  // namespace

std::string_view estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::CloseToClose: return "close_to_close";
        case EstimatorKind::Parkinson: return "parkinson";
        case EstimatorKind::GarmanKlass: return "garman_klass";
        case EstimatorKind::RogersSatchell: return "rogers_satchell";
        case EstimatorKind::YangZhang: return "yang_zhang";
    }
    throw std::invalid_argument("unknown estimator kind");
}

EstimatorKind estimator_from_name(std::string_view name) {
    for (EstimatorKind k : kAllEstimators)
        if (estimator_name(k) == name) return k;
    throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

void VolParams::validate() const {
    if (window < 2) throw std::invalid_argument("window must be >= 2");
    if (!(scale > 0.0)) throw std::invalid_argument("scale must be > 0");
}

VolSeries close_to_close(const OhlcSeries& series, VolParams params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.window);
    require_bars(series, n + 1, "close_to_close");

    std::vector<double> r(series.size());  // r[t] = ln(C_t / C_{t-1}), t >= 1
    for (std::size_t t = 1; t < series.size(); ++t)
        r[t] = std::log(series[t].close / series[t - 1].close);

    const double root_f = std::sqrt(params.scale);
    VolSeries out = make_series(EstimatorKind::CloseToClose, params, series.size() - n);
    for (std::size_t t = n; t < series.size(); ++t) {
        out.dates.push_back(series[t].date);
        out.sigma.push_back(root_f * std::sqrt(sample_variance(r, t - n + 1, n)));
    }
    return out;
}

VolSeries parkinson(const OhlcSeries& series, VolParams params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.window);
    require_bars(series, n, "parkinson");

    std::vector<double> hl2(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double hl = std::log(series[t].high / series[t].low);
        hl2[t] = hl * hl;
    }

    const double root_f = std::sqrt(params.scale);
    VolSeries out = make_series(EstimatorKind::Parkinson, params, series.size() - n + 1);
    for (std::size_t t = n - 1; t < series.size(); ++t) {
        double sum = 0.0;
        for (std::size_t i = t - n + 1; i <= t; ++i) sum += hl2[i];
        out.dates.push_back(series[t].date);
        out.sigma.push_back(root_f * std::sqrt(sum / (4.0 * kLn2 * static_cast<double>(n))));
    }
    return out;
}

VolSeries garman_klass(const OhlcSeries& series, VolParams params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.window);
    require_bars(series, n, "garman_klass");

    std::vector<double> term(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double hl = std::log(series[t].high / series[t].low);
        const double co = std::log(series[t].close / series[t].open);
        term[t] = 0.5 * hl * hl - (2.0 * kLn2 - 1.0) * co * co;
    }

    const double root_f = std::sqrt(params.scale);
    VolSeries out = make_series(EstimatorKind::GarmanKlass, params, series.size() - n + 1);
    for (std::size_t t = n - 1; t < series.size(); ++t) {
        double sum = 0.0;
        for (std::size_t i = t - n + 1; i <= t; ++i) sum += term[i];
        out.dates.push_back(series[t].date);
        if (sum < 0.0) {
            // the subtractive open-close term can push a window negative
            ++out.clamp_count;
            out.sigma.push_back(0.0);
        } else {
            out.sigma.push_back(root_f * std::sqrt(sum / static_cast<double>(n)));
        }
    }
    return out;
}

namespace {

// u(u-c) + d(d-c); >= 0 whenever L <= O,C <= H.
double rs_term(const OhlcBar& bar) {
    const double u = std::log(bar.high / bar.open);
    const double d = std::log(bar.low / bar.open);
    const double c = std::log(bar.close / bar.open);
    return u * (u - c) + d * (d - c);
}

}  // namespace

VolSeries rogers_satchell(const OhlcSeries& series, VolParams params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.window);
    require_bars(series, n, "rogers_satchell");

    std::vector<double> term(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) term[t] = rs_term(series[t]);

    const double root_f = std::sqrt(params.scale);
    VolSeries out = make_series(EstimatorKind::RogersSatchell, params, series.size() - n + 1);
    for (std::size_t t = n - 1; t < series.size(); ++t) {
        double sum = 0.0;
        for (std::size_t i = t - n + 1; i <= t; ++i) sum += term[i];
        out.dates.push_back(series[t].date);
        out.sigma.push_back(root_f * std::sqrt(std::max(sum, 0.0) / static_cast<double>(n)));
    }
    return out;
}

double yang_zhang_k(int window) {
    const double n = static_cast<double>(window);
    return 0.34 / (1.34 + (n + 1.0) / (n - 1.0));
}

VolSeries yang_zhang(const OhlcSeries& series, VolParams params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.window);
    require_bars(series, n + 1, "yang_zhang");

    std::vector<double> overnight(series.size());  // ln(O_t / C_{t-1}), t >= 1
    std::vector<double> openclose(series.size());  // ln(C_t / O_t)
    std::vector<double> rs(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (t >= 1) overnight[t] = std::log(series[t].open / series[t - 1].close);
        openclose[t] = std::log(series[t].close / series[t].open);
        rs[t] = rs_term(series[t]);
    }

    const double k = yang_zhang_k(params.window);
    const double root_f = std::sqrt(params.scale);
    VolSeries out = make_series(EstimatorKind::YangZhang, params, series.size() - n);
    for (std::size_t t = n; t < series.size(); ++t) {
        const std::size_t begin = t - n + 1;
        const double v_on = sample_variance(overnight, begin, n);
        const double v_oc = sample_variance(openclose, begin, n);
        double rs_sum = 0.0;
        for (std::size_t i = begin; i <= t; ++i) rs_sum += rs[i];
        const double v_rs = std::max(rs_sum, 0.0) / static_cast<double>(n);
        out.dates.push_back(series[t].date);
        out.sigma.push_back(root_f * std::sqrt(v_on + k * v_oc + (1.0 - k) * v_rs));
    }
    return out;
}

std::map<EstimatorKind, VolSeries> compute_all(const OhlcSeries& series, VolParams params) {
    std::map<EstimatorKind, VolSeries> out;
    out.emplace(EstimatorKind::CloseToClose, close_to_close(series, params));
    out.emplace(EstimatorKind::Parkinson, parkinson(series, params));
    out.emplace(EstimatorKind::GarmanKlass, garman_klass(series, params));
    out.emplace(EstimatorKind::RogersSatchell, rogers_satchell(series, params));
    out.emplace(EstimatorKind::YangZhang, yang_zhang(series, params));

    // close_to_close/yang_zhang start one day later than the pure range
    // estimators; trim everything to the latest common start date.
    Date start{};
    for (const auto& [kind, vs] : out) {
        assert(!vs.dates.empty());
        start = std::max(start, vs.dates.front());
    }
    for (auto& [kind, vs] : out) {
        const auto it = std::lower_bound(vs.dates.begin(), vs.dates.end(), start);
        assert(it != vs.dates.end() && *it == start);
        const auto offset = static_cast<std::size_t>(it - vs.dates.begin());
        vs.dates.erase(vs.dates.begin(), vs.dates.begin() + static_cast<std::ptrdiff_t>(offset));
        vs.sigma.erase(vs.sigma.begin(), vs.sigma.begin() + static_cast<std::ptrdiff_t>(offset));
    }

    const std::size_t len = out.begin()->second.size();
    for (const auto& [kind, vs] : out) assert(vs.size() == len);
    return out;
}

void write_vol_csv(const std::filesystem::path& path, const VolSeries& series) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "date,sigma\n";
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", series.sigma[i]);
        out << series.dates[i].iso() << ',' << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace rangevol
