#include "rangevol/market_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rangevol {

namespace {

int days_in_month(int year, int month) {
    static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return kDays[month - 1];
}

}  // namespace

bool Date::valid() const {
    return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

// Howard Hinnant's proleptic-Gregorian civil <-> serial day algorithms.
std::int64_t Date::serial() const {
    int y = year;
    const unsigned m = static_cast<unsigned>(month);
    const unsigned d = static_cast<unsigned>(day);
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Date Date::from_serial(std::int64_t days) {
    days += 719468;
    const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

int Date::weekday() const {
    // serial 0 is 1970-01-01, a Thursday.
    const std::int64_t s = serial();
    return static_cast<int>(((s % 7) + 7 + 3) % 7);
}

Date Date::parse(std::string_view text) {
    auto fail = [&] { throw std::invalid_argument("bad date '" + std::string(text) + "', want YYYY-MM-DD"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') fail();
    Date d;
    auto number = [&](std::size_t pos, std::size_t len, int& out) {
        const char* first = text.data() + pos;
        auto [ptr, ec] = std::from_chars(first, first + len, out);
        if (ec != std::errc{} || ptr != first + len) fail();
    };
    number(0, 4, d.year);
    number(5, 2, d.month);
    number(8, 2, d.day);
    if (!d.valid()) fail();
    return d;
}

bool OhlcBar::valid() const {
    for (double p : {open, high, low, close})
        if (!std::isfinite(p) || p <= 0.0) return false;
    return low <= std::min(open, close) && high >= std::max(open, close);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string field = line.substr(start, comma == std::string::npos ? comma : comma - start);
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(std::move(field));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool parse_price(const std::string& field, double& out) {
    const char* first = field.data();
    auto [ptr, ec] = std::from_chars(first, first + field.size(), out);
    return ec == std::errc{} && ptr == first + field.size() && std::isfinite(out);
}

}  // namespace

OhlcSeries load_csv(const std::filesystem::path& path, std::string ticker,
                    BadRowPolicy policy, LoadStats* stats) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");

    const auto header = split_csv_line(line);
    int idx_date = -1, idx_open = -1, idx_high = -1, idx_low = -1, idx_close = -1;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        const std::string name = lower(header[i]);
        if (name == "date") idx_date = i;
        else if (name == "open") idx_open = i;
        else if (name == "high") idx_high = i;
        else if (name == "low") idx_low = i;
        else if (name == "close") idx_close = i;
    }
    for (auto [idx, name] : {std::pair{idx_date, "Date"}, {idx_open, "Open"}, {idx_high, "High"},
                             {idx_low, "Low"}, {idx_close, "Close"}})
        if (idx < 0) throw std::runtime_error(path.string() + ": missing required column " + name);

    LoadStats st;
    std::vector<OhlcBar> bars;
    std::size_t line_no = 1;
    const int needed = std::max({idx_date, idx_open, idx_high, idx_low, idx_close});

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        ++st.data_rows;
        const auto fields = split_csv_line(line);

        auto reject = [&](const std::string& why) {
            if (policy == BadRowPolicy::Strict)
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + why);
            ++st.dropped;
        };

        if (static_cast<int>(fields.size()) <= needed) {
            reject("too few fields");
            continue;
        }
        OhlcBar bar;
        try {
            bar.date = Date::parse(fields[idx_date]);
        } catch (const std::invalid_argument& e) {
            reject(e.what());
            continue;
        }
        if (!parse_price(fields[idx_open], bar.open) || !parse_price(fields[idx_high], bar.high) ||
            !parse_price(fields[idx_low], bar.low) || !parse_price(fields[idx_close], bar.close)) {
            reject("missing or non-numeric price on " + bar.date.iso());
            continue;
        }
        if (!bar.valid()) {
            reject("bar invariant violated on " + bar.date.iso());
            continue;
        }
        bars.push_back(bar);
    }

    std::stable_sort(bars.begin(), bars.end(),
                     [](const OhlcBar& a, const OhlcBar& b) { return a.date < b.date; });

    // Duplicate dates: first occurrence wins under Skip.
    std::vector<OhlcBar> unique;
    unique.reserve(bars.size());
    for (const OhlcBar& bar : bars) {
        if (!unique.empty() && unique.back().date == bar.date) {
            if (policy == BadRowPolicy::Strict)
                throw std::runtime_error(path.string() + ": duplicate date " + bar.date.iso());
            ++st.dropped;
            continue;
        }
        unique.push_back(bar);
    }

    if (unique.empty()) throw std::runtime_error(path.string() + ": zero valid rows");
    if (stats) *stats = st;
    return OhlcSeries{std::move(ticker), std::move(unique)};
}

void write_csv(const std::filesystem::path& path, const OhlcSeries& series) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "Date,Open,High,Low,Close\n";
    char buf[160];
    for (const OhlcBar& b : series.bars) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g\n", b.date.iso().c_str(),
                      b.open, b.high, b.low, b.close);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

OhlcSeries slice_by_date(const OhlcSeries& series, Date start, Date end) {
    if (start > end) throw std::invalid_argument("slice_by_date: start > end");
    auto lo = std::lower_bound(series.bars.begin(), series.bars.end(), start,
                               [](const OhlcBar& b, const Date& d) { return b.date < d; });
    auto hi = std::upper_bound(series.bars.begin(), series.bars.end(), end,
                               [](const Date& d, const OhlcBar& b) { return d < b.date; });
    return OhlcSeries{series.ticker, std::vector<OhlcBar>(lo, hi)};
}

}  // namespace rangevol
