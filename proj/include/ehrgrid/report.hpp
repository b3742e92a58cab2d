#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ehrgrid/benchprep.hpp"
#include "ehrgrid/cohort.hpp"
#include "ehrgrid/timeseries.hpp"

namespace ehrgrid {

// One demographic attribute crossed against gender. Every cohort row lands
// in exactly one cell, so counts over a table partition the cohort.
struct CrossTab {
    std::string field;
    std::vector<std::string> gender_levels;  // column order, sorted
    std::vector<std::string> row_levels;     // row order, sorted
    std::vector<std::vector<std::int64_t>> counts;  // [row][gender]

    std::int64_t row_total(std::size_t r) const {
        std::int64_t n = 0;
        for (auto c : counts[r]) n += c;
        return n;
    }
    std::int64_t total() const {
        std::int64_t n = 0;
        for (std::size_t r = 0; r < counts.size(); ++r) n += row_total(r);
        return n;
    }
    double row_percent(std::size_t r, std::size_t g) const {
        return 100.0 * static_cast<double>(counts[r][g]) / static_cast<double>(row_total(r));
    }
};

struct CohortReport {
    std::int64_t cohort_size = 0;
    std::vector<CrossTab> tables;  // age bucket, ethnicity, insurance, admission, careunit
    std::vector<MissingnessRow> missingness;
};

inline CohortReport build_cohort_report(const std::vector<CohortRow>& cohort,
                                        const HourlyGrid& grid) {
    CohortReport rep;
    rep.cohort_size = static_cast<std::int64_t>(cohort.size());

    std::set<std::string> genders;
    for (const auto& r : cohort) genders.insert(r.gender);
    const std::vector<std::string> gender_levels(genders.begin(), genders.end());

    auto cross = [&](const std::string& field, auto&& level_of) {
        std::map<std::string, std::vector<std::int64_t>> rows;
        for (const auto& r : cohort) {
            auto& counts = rows.try_emplace(level_of(r), gender_levels.size(), 0).first->second;
            const auto g = std::lower_bound(gender_levels.begin(), gender_levels.end(), r.gender);
            ++counts[static_cast<std::size_t>(g - gender_levels.begin())];
        }
        CrossTab t;
        t.field = field;
        t.gender_levels = gender_levels;
        for (auto& [level, counts] : rows) {
            t.row_levels.push_back(level);
            t.counts.push_back(std::move(counts));
        }
        rep.tables.push_back(std::move(t));
    };
    cross("age_bucket", [](const CohortRow& r) { return age_bucket(r.age); });
    cross("ethnicity", [](const CohortRow& r) { return r.ethnicity; });
    cross("insurance", [](const CohortRow& r) { return r.insurance; });
    cross("admission_type", [](const CohortRow& r) { return r.admission_type; });
    cross("first_careunit", [](const CohortRow& r) { return r.first_careunit; });

    rep.missingness = summarize_missingness(grid);
    return rep;
}

namespace reportdetail {

inline std::string fixed1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

inline void pad_to(std::string& line, std::size_t width) {
    if (line.size() < width) line.append(width - line.size(), ' ');
}

}  // namespace reportdetail

// Plain-text rendering: one block per attribute with per-gender counts and
// row percentages, then the per-variable presence table.
inline std::string render_cohort_report(const CohortReport& rep) {
    std::string out;
    out += "Cohort summary (N=" + std::to_string(rep.cohort_size) + ")\n";
    for (const auto& t : rep.tables) {
        out += "\n" + t.field + "\n";
        std::size_t label_w = t.field.size();
        for (const auto& l : t.row_levels) label_w = std::max(label_w, l.size());
        label_w += 2;
        std::string header(label_w, ' ');
        for (const auto& g : t.gender_levels) {
            header += "      " + g + "      %";
        }
        header += "  total";
        out += header + "\n";
        for (std::size_t r = 0; r < t.row_levels.size(); ++r) {
            std::string line = t.row_levels[r];
            reportdetail::pad_to(line, label_w);
            for (std::size_t g = 0; g < t.gender_levels.size(); ++g) {
                std::string n = std::to_string(t.counts[r][g]);
                std::string p = reportdetail::fixed1(t.row_percent(r, g));
                line += std::string(7 > n.size() ? 7 - n.size() : 1, ' ') + n;
                line += std::string(7 > p.size() ? 7 - p.size() : 1, ' ') + p;
            }
            std::string tot = std::to_string(t.row_total(r));
            line += std::string(7 > tot.size() ? 7 - tot.size() : 1, ' ') + tot;
            out += line + "\n";
        }
    }
    out += "\nvariable presence\n";
    std::size_t name_w = 8;
    for (const auto& m : rep.missingness) name_w = std::max(name_w, m.variable.size());
    name_w += 2;
    std::string header = "variable";
    reportdetail::pad_to(header, name_w);
    out += header + "  present%  n_present       mean        std\n";
    for (const auto& m : rep.missingness) {
        std::string line = m.variable;
        reportdetail::pad_to(line, name_w);
        auto cell = [](const std::string& s, std::size_t w) {
            return std::string(w > s.size() ? w - s.size() : 1, ' ') + s;
        };
        line += cell(reportdetail::fixed1(m.presence_percent), 9);
        line += cell(std::to_string(m.n_present), 11);
        line += cell(m.n_present > 0 ? reportdetail::fixed1(m.mean) : "-", 11);
        line += cell(m.std ? reportdetail::fixed1(*m.std) : "-", 11);
        out += line + "\n";
    }
    return out;
}

}  // namespace ehrgrid
