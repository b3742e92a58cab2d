#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "ehrgrid/error.hpp"

namespace ehrgrid {

// Timezone-naive civil time, stored as seconds relative to 1970-01-01 00:00:00.
// Source timestamps are date-shifted and carry no zone, so plain civil
// arithmetic is exact. Negative values (pre-1970 birth dates) are fine.
struct Timestamp {
    std::int64_t sec = 0;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

constexpr std::int64_t kSecondsPerHour = 3600;
constexpr std::int64_t kSecondsPerDay = 86400;

// Days since 1970-01-01 for a proleptic Gregorian civil date
// (Howard Hinnant's days_from_civil).
constexpr std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDateTime {
    int year;
    unsigned month, day;
    unsigned hour = 0, minute = 0, second = 0;
};

constexpr CivilDateTime civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDateTime{static_cast<int>(y + (m <= 2)), m, d};
}

constexpr Timestamp make_timestamp(int y, unsigned mo, unsigned d, unsigned h = 0,
                                   unsigned mi = 0, unsigned s = 0) {
    return Timestamp{days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 + mi * 60 + s};
}

inline CivilDateTime to_civil(Timestamp t) {
    std::int64_t days = t.sec / kSecondsPerDay;
    std::int64_t rem = t.sec % kSecondsPerDay;
    if (rem < 0) {
        rem += kSecondsPerDay;
        days -= 1;
    }
    CivilDateTime c = civil_from_days(days);
    c.hour = static_cast<unsigned>(rem / 3600);
    c.minute = static_cast<unsigned>((rem / 60) % 60);
    c.second = static_cast<unsigned>(rem % 60);
    return c;
}

namespace detail {
inline bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
    if (pos + len > s.size()) return false;
    unsigned v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        char c = s[i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<unsigned>(c - '0');
    }
    out = v;
    return true;
}
}  // namespace detail

// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM:SS" and the 'T' separator variant.
inline std::optional<Timestamp> try_parse_timestamp(std::string_view s) {
    unsigned y, mo, d;
    if (s.size() != 10 && s.size() != 19) return std::nullopt;
    if (!detail::parse_fixed_uint(s, 0, 4, y)) return std::nullopt;
    if (s[4] != '-' || s[7] != '-') return std::nullopt;
    if (!detail::parse_fixed_uint(s, 5, 2, mo) || !detail::parse_fixed_uint(s, 8, 2, d))
        return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
    unsigned h = 0, mi = 0, sec = 0;
    if (s.size() == 19) {
        if (s[10] != ' ' && s[10] != 'T') return std::nullopt;
        if (s[13] != ':' || s[16] != ':') return std::nullopt;
        if (!detail::parse_fixed_uint(s, 11, 2, h) || !detail::parse_fixed_uint(s, 14, 2, mi) ||
            !detail::parse_fixed_uint(s, 17, 2, sec))
            return std::nullopt;
        if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    }
    return make_timestamp(static_cast<int>(y), mo, d, h, mi, sec);
}

// Canonical "YYYY-MM-DD HH:MM:SS".
inline std::string format_timestamp(Timestamp t) {
    CivilDateTime c = to_civil(t);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02u:%02u:%02u", c.year, c.month, c.day,
                  c.hour, c.minute, c.second);
    return buf;
}

inline double hours_between(Timestamp from, Timestamp to) {
    return static_cast<double>(to.sec - from.sec) / kSecondsPerHour;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline std::int64_t ceil_div_positive(std::int64_t a, std::int64_t b) {
    return (a + b - 1) / b;
}

// Completed calendar years between dob and `at`. The source data masks
// very old patients by shifting dob centuries back, which surfaces here as
// an age around 300; it is passed through untouched.
inline int civil_age_years(Timestamp dob, Timestamp at) {
    if (dob.sec > at.sec) throw Error(ErrorCode::negative_age, "dob after reference time");
    CivilDateTime b = to_civil(dob);
    CivilDateTime a = to_civil(at);
    int age = a.year - b.year;
    if (a.month < b.month || (a.month == b.month && a.day < b.day)) --age;
    return age;
}

inline Timestamp add_seconds(Timestamp t, std::int64_t s) { return Timestamp{t.sec + s}; }
inline Timestamp add_hours(Timestamp t, double h) {
    return Timestamp{t.sec + static_cast<std::int64_t>(h * kSecondsPerHour)};
}

}  // namespace ehrgrid
