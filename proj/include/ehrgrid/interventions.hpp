#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrgrid/cohort.hpp"
#include "ehrgrid/error.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/time.hpp"

namespace ehrgrid {

// Column order is fixed; every downstream file and report relies on it.
// vaso is both a first-class event name and the OR of the nine drugs.
inline constexpr std::array<const char*, 14> kInterventionColumns = {
    "vent",          "vaso",          "adenosine",   "dobutamine",  "dopamine",
    "epinephrine",   "isuprel",       "milrinone",   "norepinephrine",
    "phenylephrine", "vasopressin",   "colloid_bolus", "crystalloid_bolus", "nivdurations"};

inline constexpr std::size_t kVasoColumn = 1;
inline constexpr std::size_t kFirstDrugColumn = 2;   // adenosine
inline constexpr std::size_t kLastDrugColumn = 10;   // vasopressin

inline std::optional<std::size_t> intervention_column(const std::string& name) {
    for (std::size_t i = 0; i < kInterventionColumns.size(); ++i)
        if (name == kInterventionColumns[i]) return i;
    return std::nullopt;
}

inline bool is_intermittent(std::size_t column) {
    return kInterventionColumns[column] == std::string_view("colloid_bolus") ||
           kInterventionColumns[column] == std::string_view("crystalloid_bolus");
}

// Hours whose [h, h+1) slot intersects [starttime, endtime), clipped to the
// stay's grid. A zero-length record still marks its containing hour —
// charting artifacts should not vanish.
inline std::vector<std::int64_t> rasterize_continuous(const InterventionEventRow& ev,
                                                      Timestamp intime, std::int64_t n_hours) {
    std::int64_t s = ev.starttime.sec - intime.sec;
    std::int64_t e = ev.endtime.sec - intime.sec;
    std::int64_t lo = floor_div(s, kSecondsPerHour);
    std::int64_t hi = e > s ? floor_div(e - 1, kSecondsPerHour) : lo;
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, n_hours - 1);
    std::vector<std::int64_t> hours;
    for (std::int64_t h = lo; h <= hi; ++h) hours.push_back(h);
    return hours;
}

// Bolus-style records mark the single hour of administration. The stay's
// time span is half-open, so a bolus stamped exactly at outtime is gone.
inline std::vector<std::int64_t> rasterize_intermittent(const InterventionEventRow& ev,
                                                        Timestamp intime, Timestamp outtime,
                                                        std::int64_t n_hours) {
    if (ev.starttime < intime || !(ev.starttime < outtime)) return {};
    std::int64_t h = floor_div(ev.starttime.sec - intime.sec, kSecondsPerHour);
    if (h < 0 || h >= n_hours) return {};
    return {h};
}

struct InterventionGrid {
    struct Stay {
        std::int64_t subject_id = 0;
        std::int64_t hadm_id = 0;
        std::int64_t icustay_id = 0;
        std::int64_t n_hours = 0;
        std::vector<std::uint16_t> hours;  // bit i = column i, one word per hour

        bool get(std::int64_t hour, std::size_t column) const {
            return (hours[static_cast<std::size_t>(hour)] >> column) & 1u;
        }
    };
    std::vector<Stay> stays;  // cohort order
};

// Dense hourly 0/1 grid over the cohort; absence of events means
// non-treatment, not missingness. Each event's hour set is OR-ed into its
// column, then vaso is OR-ed with every drug column so the umbrella
// indicator covers both direct records and per-drug records.
inline InterventionGrid build_intervention_grid(const std::vector<InterventionEventRow>& events,
                                                const std::vector<CohortRow>& cohort) {
    InterventionGrid grid;
    grid.stays.reserve(cohort.size());
    std::unordered_map<std::int64_t, std::size_t> stay_index;
    for (const auto& row : cohort) {
        stay_index.emplace(row.icustay_id, grid.stays.size());
        InterventionGrid::Stay s;
        s.subject_id = row.subject_id;
        s.hadm_id = row.hadm_id;
        s.icustay_id = row.icustay_id;
        s.n_hours = row.n_hours();
        s.hours.assign(static_cast<std::size_t>(s.n_hours), 0);
        grid.stays.push_back(std::move(s));
    }

    std::unordered_map<std::int64_t, const CohortRow*> cohort_by_stay;
    for (const auto& row : cohort) cohort_by_stay.emplace(row.icustay_id, &row);

    for (const auto& ev : events) {
        auto column = intervention_column(ev.name);
        if (!column)
            throw Error(ErrorCode::unknown_intervention_name,
                        "intervention event names unknown treatment '" + ev.name + "'");
        auto it = stay_index.find(ev.icustay_id);
        if (it == stay_index.end()) continue;  // stay not in cohort
        const CohortRow& row = *cohort_by_stay.at(ev.icustay_id);
        auto& s = grid.stays[it->second];
        const auto hours = is_intermittent(*column)
                               ? rasterize_intermittent(ev, row.intime, row.outtime, s.n_hours)
                               : rasterize_continuous(ev, row.intime, s.n_hours);
        const std::uint16_t bit = static_cast<std::uint16_t>(1u << *column);
        for (std::int64_t h : hours) s.hours[static_cast<std::size_t>(h)] |= bit;
    }

    constexpr std::uint16_t drug_mask = ((1u << (kLastDrugColumn + 1)) - 1u) &
                                        ~((1u << kFirstDrugColumn) - 1u);
    for (auto& s : grid.stays)
        for (auto& word : s.hours)
            if (word & drug_mask) word |= static_cast<std::uint16_t>(1u << kVasoColumn);

    return grid;
}

}  // namespace ehrgrid
