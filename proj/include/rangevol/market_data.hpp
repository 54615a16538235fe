#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rangevol {

// Calendar date. Daily bars only, so no time-of-day or timezone handling.
struct Date {
    int year = 0;
    int month = 0;  // 1..12
    int day = 0;    // 1..31

    auto operator<=>(const Date&) const = default;

    bool valid() const;
    std::string iso() const;  // "YYYY-MM-DD"

    // Days since 1970-01-01 (proleptic Gregorian); inverse of from_serial.
    std::int64_t serial() const;
    static Date from_serial(std::int64_t days);

    int weekday() const;  // 0 = Monday .. 6 = Sunday
    bool is_weekday() const { return weekday() < 5; }

    // Parses strict ISO-8601 "YYYY-MM-DD"; throws std::invalid_argument.
    static Date parse(std::string_view text);
};

struct OhlcBar {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;

    // All prices strictly positive and finite (log-price formulas require it),
    // low <= min(open, close), high >= max(open, close).
    bool valid() const;
};

struct OhlcSeries {
    std::string ticker;
    std::vector<OhlcBar> bars;  // strictly increasing dates

    std::size_t size() const { return bars.size(); }
    bool empty() const { return bars.empty(); }
    const OhlcBar& operator[](std::size_t i) const { return bars[i]; }
};

enum class BadRowPolicy {
    Skip,    // drop offending rows, count them
    Strict,  // throw naming the offending row
};

struct LoadStats {
    std::size_t data_rows = 0;  // non-header, non-blank rows seen
    std::size_t dropped = 0;    // rows rejected under Skip
};

// Reads a "Date,Open,High,Low,Close[,...]" CSV (extra columns such as adjusted
// close or volume are ignored; header matched case-insensitively). Rows with
// missing/non-numeric fields, bar-invariant violations, or duplicate dates are
// handled per `policy`. Rows are sorted by date. Throws std::runtime_error on
// missing file, missing required column, or zero valid rows.
OhlcSeries load_csv(const std::filesystem::path& path, std::string ticker,
                    BadRowPolicy policy = BadRowPolicy::Skip,
                    LoadStats* stats = nullptr);

// Writes bars in the same CSV format load_csv reads (full double precision, so
// a write/load round trip is exact).
void write_csv(const std::filesystem::path& path, const OhlcSeries& series);

// Bars with start <= date <= end, order preserved; may be empty.
// Throws std::invalid_argument if start > end.
OhlcSeries slice_by_date(const OhlcSeries& series, Date start, Date end);

}  // namespace rangevol
