#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrgrid/error.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/resources.hpp"
#include "ehrgrid/time.hpp"

namespace ehrgrid {

struct CohortRow {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t icustay_id = 0;
    std::int64_t age = 0;  // completed years; the source privacy mask surfaces as 300
    std::string gender;
    std::string ethnicity;
    std::string insurance;
    std::string admission_type;
    std::string first_careunit;
    Timestamp admittime;
    Timestamp dischtime;
    Timestamp intime;
    Timestamp outtime;
    bool mort_icu = false;
    bool mort_hosp = false;
    double los_icu_hours = 0.0;

    // Grid length in whole hours; a partial trailing hour still gets a slot.
    std::int64_t n_hours() const {
        return ceil_div_positive(outtime.sec - intime.sec, kSecondsPerHour);
    }
};

// Age in completed calendar years at ICU admission. Source records with
// masked birth dates come out around 300 and are kept verbatim — they are
// elderly patients and must survive the minimum-age filter.
inline std::int64_t compute_age(Timestamp dob, Timestamp intime) {
    return civil_age_years(dob, intime);
}

struct Outcomes {
    bool mort_icu = false;
    bool mort_hosp = false;
    double los_icu_hours = 0.0;
};

inline Outcomes derive_outcomes(const StayRow& stay, const AdmissionRow& adm) {
    Outcomes o;
    o.los_icu_hours =
        static_cast<double>(stay.outtime.sec - stay.intime.sec) / static_cast<double>(kSecondsPerHour);
    o.mort_icu = adm.deathtime && stay.intime <= *adm.deathtime && *adm.deathtime <= stay.outtime;
    // An in-unit death is a hospital death even if the recorded discharge
    // time is inconsistent, so the implication mort_icu => mort_hosp holds.
    o.mort_hosp = adm.hospital_expire_flag ||
                  (adm.deathtime && *adm.deathtime <= adm.dischtime) || o.mort_icu;
    return o;
}

struct ExclusionCounts {
    std::int64_t n_stays = 0;      // stays examined
    std::int64_t n_not_first = 0;  // not the subject's earliest stay
    std::int64_t n_age = 0;        // younger than min_age at intime
    std::int64_t n_too_short = 0;  // LOS below min_duration
    std::int64_t n_too_long = 0;   // LOS at or above max_duration
    std::int64_t n_selected = 0;

    std::int64_t excluded() const { return n_not_first + n_age + n_too_short + n_too_long; }
};

struct CohortResult {
    std::vector<CohortRow> rows;  // sorted by subject_id
    ExclusionCounts counts;
};

// One stay per subject: the earliest intime (ties to the smaller
// icustay_id), then age and length-of-stay filters. Each excluded stay is
// attributed to the first criterion it fails, in the fixed order
// not-first, age, too-short, too-long, so the counts always tally.
inline CohortResult select_cohort(const SourceDataset& ds, const ExtractConfig& cfg) {
    std::unordered_map<std::int64_t, const PatientRow*> patients;
    for (const auto& p : ds.patients) patients.emplace(p.subject_id, &p);
    std::unordered_map<std::int64_t, const AdmissionRow*> admissions;
    for (const auto& a : ds.admissions) admissions.emplace(a.hadm_id, &a);

    std::unordered_map<std::int64_t, const StayRow*> first_stay;
    for (const auto& s : ds.stays) {
        auto [it, inserted] = first_stay.emplace(s.subject_id, &s);
        if (!inserted) {
            const StayRow* cur = it->second;
            if (s.intime < cur->intime ||
                (s.intime == cur->intime && s.icustay_id < cur->icustay_id))
                it->second = &s;
        }
    }

    CohortResult out;
    out.counts.n_stays = static_cast<std::int64_t>(ds.stays.size());
    for (const auto& s : ds.stays) {
        if (first_stay.at(s.subject_id) != &s) {
            ++out.counts.n_not_first;
            continue;
        }
        const PatientRow& p = *patients.at(s.subject_id);
        const AdmissionRow& a = *admissions.at(s.hadm_id);
        std::int64_t age = compute_age(p.dob, s.intime);
        if (static_cast<double>(age) < cfg.min_age) {
            ++out.counts.n_age;
            continue;
        }
        Outcomes oc = derive_outcomes(s, a);
        if (oc.los_icu_hours < cfg.min_duration) {
            ++out.counts.n_too_short;
            continue;
        }
        if (oc.los_icu_hours >= cfg.max_duration) {
            ++out.counts.n_too_long;
            continue;
        }
        CohortRow row;
        row.subject_id = s.subject_id;
        row.hadm_id = s.hadm_id;
        row.icustay_id = s.icustay_id;
        row.age = age;
        row.gender = p.gender;
        row.ethnicity = p.ethnicity;
        row.insurance = p.insurance;
        row.admission_type = a.admission_type;
        row.first_careunit = s.first_careunit;
        row.admittime = a.admittime;
        row.dischtime = a.dischtime;
        row.intime = s.intime;
        row.outtime = s.outtime;
        row.mort_icu = oc.mort_icu;
        row.mort_hosp = oc.mort_hosp;
        row.los_icu_hours = oc.los_icu_hours;
        out.rows.push_back(std::move(row));
        ++out.counts.n_selected;
    }

    std::sort(out.rows.begin(), out.rows.end(),
              [](const CohortRow& a, const CohortRow& b) { return a.subject_id < b.subject_id; });
    return out;
}

}  // namespace ehrgrid
