#include <algorithm>

#include "catch_amalgamated.hpp"
#include "ehrgrid/cohort.hpp"
#include "ehrgrid/resources.hpp"

using namespace ehrgrid;

namespace {

// Minimal linked patient/admission/stay triple with knobs for the fields
// the selection rules look at.
struct Builder {
    SourceDataset ds;
    std::int64_t next_subject = 1, next_hadm = 1000, next_stay = 2000;

    struct StayOpts {
        std::int64_t age = 45;
        std::int64_t los_sec = 48 * 3600;
        std::optional<std::int64_t> subject;  // reuse for repeat-stay cases
        std::int64_t intime_offset_sec = 0;
        std::optional<std::int64_t> death_offset_sec;  // relative to intime
        bool expire_flag = false;
        std::optional<std::int64_t> forced_stay_id;
    };

    std::int64_t add(const StayOpts& o) {
        const std::int64_t subject = o.subject ? *o.subject : next_subject++;
        const Timestamp intime =
            add_seconds(make_timestamp(2130, 6, 10, 12, 0, 0), o.intime_offset_sec);
        if (!o.subject) {
            PatientRow p;
            p.subject_id = subject;
            p.gender = subject % 2 ? "F" : "M";
            p.dob = make_timestamp(static_cast<int>(2130 - o.age), 6, 10);
            p.ethnicity = "OTHER";
            p.insurance = "Private";
            ds.patients.push_back(p);
        }
        AdmissionRow a;
        a.hadm_id = next_hadm++;
        a.subject_id = subject;
        a.admittime = add_seconds(intime, -7200);
        a.dischtime = add_seconds(intime, o.los_sec + 24 * 3600);
        a.admission_type = "EMERGENCY";
        a.hospital_expire_flag = o.expire_flag;
        if (o.death_offset_sec) {
            a.deathtime = add_seconds(intime, *o.death_offset_sec);
            a.dischtime = *a.deathtime;
            a.hospital_expire_flag = true;
        }
        ds.admissions.push_back(a);
        StayRow s;
        s.icustay_id = o.forced_stay_id ? *o.forced_stay_id : next_stay++;
        s.hadm_id = a.hadm_id;
        s.subject_id = subject;
        s.intime = intime;
        s.outtime = add_seconds(intime, o.los_sec);
        s.first_careunit = "MICU";
        ds.stays.push_back(s);
        return s.icustay_id;
    }
};

std::vector<std::int64_t> selected_ids(const CohortResult& r) {
    std::vector<std::int64_t> ids;
    for (const auto& row : r.rows) ids.push_back(row.icustay_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

TEST_CASE("age boundary sits exactly at fifteen years") {
    Builder b;
    const auto too_young = b.add({.age = 14});
    const auto old_enough = b.add({.age = 15});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    CHECK(selected_ids(result) == std::vector<std::int64_t>{old_enough});
    CHECK(result.counts.n_age == 1);
    (void)too_young;
}

TEST_CASE("masked demographics pass the age gate") {
    Builder b;
    const auto masked = b.add({.age = 300});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    REQUIRE(selected_ids(result) == std::vector<std::int64_t>{masked});
    CHECK(result.rows[0].age == 300);
}

TEST_CASE("stay duration gates are half-open") {
    Builder b;
    const auto just_short = b.add({.los_sec = 43164});       // 11.99 h
    const auto exact_min = b.add({.los_sec = 12 * 3600});    // stays in
    const auto exact_max = b.add({.los_sec = 240 * 3600});   // falls out
    const auto just_under = b.add({.los_sec = 240 * 3600 - 1});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    CHECK(selected_ids(result) == std::vector<std::int64_t>{exact_min, just_under});
    CHECK(result.counts.n_too_short == 1);
    CHECK(result.counts.n_too_long == 1);
    (void)just_short;
    (void)exact_max;
}

TEST_CASE("only the earliest stay per subject survives") {
    Builder b;
    const auto first = b.add({});
    const auto subject = b.ds.stays.back().subject_id;
    const auto later =
        b.add({.subject = subject, .intime_offset_sec = 30 * 24 * 3600});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    CHECK(selected_ids(result) == std::vector<std::int64_t>{first});
    CHECK(result.counts.n_not_first == 1);
    (void)later;
}

TEST_CASE("simultaneous stays tie-break on the smaller id") {
    Builder b;
    b.add({.forced_stay_id = 9001});
    const auto subject = b.ds.stays.back().subject_id;
    b.add({.subject = subject, .forced_stay_id = 8001});  // same intime
    const auto result = select_cohort(b.ds, ExtractConfig{});
    CHECK(selected_ids(result) == std::vector<std::int64_t>{8001});
    CHECK(result.counts.n_not_first == 1);
}

TEST_CASE("exclusion reasons follow a fixed precedence") {
    Builder b;
    // A later stay that is also too short: counted as a repeat, nothing else.
    b.add({});
    const auto subject = b.ds.stays.back().subject_id;
    b.add({.los_sec = 3 * 3600, .subject = subject, .intime_offset_sec = 90 * 24 * 3600});
    // An underage subject with a too-short stay: counted under age.
    b.add({.age = 12, .los_sec = 3 * 3600});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    CHECK(result.counts.n_not_first == 1);
    CHECK(result.counts.n_age == 1);
    CHECK(result.counts.n_too_short == 0);
    CHECK(result.counts.n_selected == 1);
    CHECK(result.counts.n_stays == 3);
    CHECK(result.counts.excluded() == 2);
}

TEST_CASE("outcome labels distinguish unit death from hospital death") {
    Builder b;
    const auto in_icu = b.add({.death_offset_sec = 24 * 3600});          // mid-stay
    const auto at_door = b.add({.death_offset_sec = 0});                  // at intime
    const auto at_exit = b.add({.death_offset_sec = 48 * 3600});          // exactly outtime
    const auto on_ward = b.add({.death_offset_sec = 60 * 3600});          // after the unit
    const auto flag_only = b.add({.expire_flag = true});
    const auto survivor = b.add({});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    REQUIRE(result.rows.size() == 6);

    auto row = [&](std::int64_t id) {
        return *std::find_if(result.rows.begin(), result.rows.end(),
                             [&](const CohortRow& r) { return r.icustay_id == id; });
    };
    CHECK(row(in_icu).mort_icu);
    CHECK(row(at_door).mort_icu);
    CHECK(row(at_exit).mort_icu);
    CHECK_FALSE(row(on_ward).mort_icu);
    CHECK(row(on_ward).mort_hosp);
    CHECK_FALSE(row(flag_only).mort_icu);
    CHECK(row(flag_only).mort_hosp);
    CHECK_FALSE(row(survivor).mort_icu);
    CHECK_FALSE(row(survivor).mort_hosp);

    for (const auto& r : result.rows)
        if (r.mort_icu) CHECK(r.mort_hosp);  // unit death is a hospital death
}

TEST_CASE("stay length fields agree with the raw interval") {
    Builder b;
    b.add({.los_sec = 100 * 3600 + 1800});  // 100.5 hours
    const auto result = select_cohort(b.ds, ExtractConfig{});
    REQUIRE(result.rows.size() == 1);
    CHECK(result.rows[0].los_icu_hours == Catch::Approx(100.5));
    CHECK(result.rows[0].n_hours() == 101);  // partial final hour still counts
}

TEST_CASE("thresholds come from the config") {
    Builder b;
    const auto seventeen = b.add({.age = 17});
    const auto eighteen = b.add({.age = 18});
    ExtractConfig cfg;
    cfg.min_age = 18;
    const auto result = select_cohort(b.ds, cfg);
    CHECK(selected_ids(result) == std::vector<std::int64_t>{eighteen});
    (void)seventeen;

    ExtractConfig shorter;
    shorter.min_duration = 2.0;
    shorter.max_duration = 1.0;
    CHECK_THROWS_AS(validate_config(shorter), Error);

    ExtractConfig negative;
    negative.min_age = -1;
    CHECK_THROWS_AS(validate_config(negative), Error);

    ExtractConfig bad_percent;
    bad_percent.min_percent = 101.0;
    CHECK_THROWS_AS(validate_config(bad_percent), Error);
}

TEST_CASE("demographics carry through to the cohort rows") {
    Builder b;
    const auto id = b.add({.age = 52});
    const auto result = select_cohort(b.ds, ExtractConfig{});
    REQUIRE(result.rows.size() == 1);
    const CohortRow& row = result.rows[0];
    CHECK(row.icustay_id == id);
    CHECK(row.age == 52);
    CHECK(row.gender == b.ds.patients[0].gender);
    CHECK(row.ethnicity == "OTHER");
    CHECK(row.insurance == "Private");
    CHECK(row.admission_type == "EMERGENCY");
    CHECK(row.first_careunit == "MICU");
    CHECK(row.intime.sec == b.ds.stays[0].intime.sec);
    CHECK(row.outtime.sec == b.ds.stays[0].outtime.sec);
}
