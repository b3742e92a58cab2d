#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ehrgrid/csv.hpp"
#include "ehrgrid/error.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/interventions.hpp"
#include "ehrgrid/resources.hpp"
#include "ehrgrid/rng.hpp"
#include "ehrgrid/time.hpp"

namespace ehrgrid {

// What the generator knows about each variable it emits. Item ids and
// bounds mirror the shipped resource files — a test pins that
// correspondence, because clamp/drop accounting depends on it.
struct GenVariable {
    const char* name;
    UnitClass unit_class;
    std::vector<std::int64_t> itemids;  // >= 50000 means a lab item, sometimes emitted unkeyed
    bool has_bounds;
    double outlier_low, valid_low, valid_high, outlier_high;
    double base_mean;      // population baseline in canonical units
    double between_sigma;  // patient-to-patient spread
    double within_sigma;   // hour-to-hour spread
    double rate_per_hour;  // expected observations per grid hour
    double signal_share;   // fraction of the planted mortality shift this variable carries
};

inline const std::vector<GenVariable>& gen_catalog() {
    static const std::vector<GenVariable> cat = {
        {"heart_rate", UnitClass::none, {211, 220045}, true, 0, 0, 350, 390, 85, 12, 6, 0.9, 1.0},
        {"systolic_blood_pressure", UnitClass::none, {51, 220179}, true, 0, 0, 375, 400, 120, 14,
         8, 0.5, 0.0},
        {"respiratory_rate", UnitClass::none, {618, 220210}, true, 0, 0, 300, 330, 18, 3.5, 2,
         0.5, 0.5},
        {"oxygen_saturation", UnitClass::none, {646, 220277}, true, 0, 0, 100, 150, 96.5, 1.2,
         1.0, 0.4, 0.0},
        {"temperature", UnitClass::temperature, {676, 678, 223761, 223762}, true, 14.2, 26, 45,
         47, 37, 0.5, 0.3, 0.35, 0.0},
        {"weight", UnitClass::weight, {762, 224639}, true, 0, 0, 250, 300, 80, 16, 1.5, 0.06,
         0.0},
        {"height", UnitClass::height, {920, 226730}, true, 0, 0, 240, 275, 170, 10, 0.8, 0.03,
         0.0},
        {"glucose", UnitClass::none, {811, 220621, 50931}, true, 0, 33, 1000, 2200, 135, 30, 18,
         0.25, 0.0},
        {"white_blood_cell_count", UnitClass::none, {1542, 220546, 51301}, true, 0, 0, 1000,
         1100, 9.5, 2.5, 1.3, 0.15, 0.0},
        {"sodium", UnitClass::none, {50824, 50983}, true, 0, 115, 180, 250, 139, 3, 2, 0.12,
         0.0},
        {"potassium", UnitClass::none, {50822, 50971}, true, 0, 2.5, 8, 15, 4.1, 0.45, 0.3, 0.12,
         0.0},
        {"lactate", UnitClass::none, {50813}, true, 0, 0.3, 25, 33, 2.2, 0.9, 0.5, 0.08, 0.0},
        {"ph", UnitClass::none, {50820}, true, 6.3, 6.8, 7.8, 8.4, 7.38, 0.05, 0.03, 0.08, 0.0},
        {"anion_gap", UnitClass::none, {50868}, false, 0, 0, 0, 0, 13, 2.5, 1.5, 0.06, 0.0},
    };
    return cat;
}

struct GenParams {
    std::int64_t n_subjects = 1000;
    double repeat_stay_fraction = 0.10;   // subjects with a later, second stay
    double masked_age_fraction = 0.03;    // privacy-masked elderly (age reads 300)
    double minor_fraction = 0.02;         // under-15, excluded by the age rule
    double short_stay_fraction = 0.05;    // LOS < 12h
    double long_stay_fraction = 0.05;     // LOS >= 240h
    double mean_extra_los_hours = 28.0;   // cohort LOS = 12h + Exp(mean), capped under 240h
    double outlier_clamp_rate = 0.004;    // per emitted observation
    double outlier_drop_rate = 0.002;
    double unit_variant_fraction = 0.15;  // alternate units for weight/height/temperature
    double lab_unkeyed_fraction = 0.30;   // lab events written without a stay id
    double mortality_rate = 0.15;
    double signal_strength = 0.0;         // baseline shift for the deceased, in between_sigma units
    std::uint64_t seed = 1;
};

inline void validate_params(const GenParams& p) {
    auto frac = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (p.n_subjects < 1) throw Error(ErrorCode::bad_config, "n_subjects must be at least 1");
    if (!frac(p.repeat_stay_fraction) || !frac(p.masked_age_fraction) ||
        !frac(p.minor_fraction) || !frac(p.short_stay_fraction) || !frac(p.long_stay_fraction) ||
        !frac(p.outlier_clamp_rate) || !frac(p.outlier_drop_rate) ||
        !frac(p.unit_variant_fraction) || !frac(p.lab_unkeyed_fraction) ||
        !frac(p.mortality_rate))
        throw Error(ErrorCode::bad_config, "generator rates must lie in [0, 1]");
    if (p.minor_fraction + p.masked_age_fraction > 1.0 ||
        p.short_stay_fraction + p.long_stay_fraction > 1.0)
        throw Error(ErrorCode::bad_config, "generator fractions must leave room for the cohort");
    if (p.mean_extra_los_hours <= 0)
        throw Error(ErrorCode::bad_config, "mean_extra_los_hours must be positive");
    if (p.signal_strength < 0)
        throw Error(ErrorCode::bad_config, "signal_strength must be non-negative");
}

struct StayTruth {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t icustay_id = 0;
    std::string status;  // selected | not_first | age | too_short | too_long
    std::int64_t age = 0;
    bool mort_icu = false;
    bool mort_hosp = false;
    double los_icu_hours = 0.0;
    std::int64_t n_hours = 0;
    // column name -> [start, end) hour runs; only treated columns present
    std::map<std::string, std::vector<std::pair<std::int64_t, std::int64_t>>> interventions;
};

struct CellTruth {
    std::int64_t icustay_id = 0;
    std::int32_t hour = 0;
    std::int32_t var = 0;  // index into gen_catalog()
    double mean = 0.0;
    std::int64_t count = 0;
    std::optional<double> std;
};

struct OutlierTruth {
    std::int64_t clamped_low = 0;
    std::int64_t clamped_high = 0;
    std::int64_t dropped = 0;
};

struct GroundTruth {
    std::uint64_t seed = 0;
    std::int64_t n_subjects = 0;
    std::int64_t n_stays = 0;
    std::int64_t n_events = 0;
    std::int64_t n_intervention_events = 0;
    std::int64_t n_attach_dropped = 0;  // unkeyed labs matching no stay
    std::int64_t n_unmapped = 0;
    std::int64_t n_unit_errors = 0;
    std::int64_t n_out_of_stay = 0;
    std::int64_t n_not_first = 0;
    std::int64_t n_age = 0;
    std::int64_t n_too_short = 0;
    std::int64_t n_too_long = 0;
    std::int64_t n_selected = 0;
    std::map<std::string, OutlierTruth> outliers;  // by variable name
    std::vector<StayTruth> stays;
    std::vector<CellTruth> cells;  // selected stays only
};

struct GenOutput {
    SourceDataset dataset;
    GroundTruth truth;
};

namespace gendetail {

// The generator's own copy of the hour-marking rule for treatment
// intervals, kept apart from the pipeline on purpose: the sidecar is an
// oracle, not an echo.
inline void mark_continuous(std::vector<bool>& hours, std::int64_t s_rel, std::int64_t e_rel) {
    const auto n = static_cast<std::int64_t>(hours.size());
    std::int64_t lo = floor_div(s_rel, kSecondsPerHour);
    std::int64_t hi = e_rel > s_rel ? floor_div(e_rel - 1, kSecondsPerHour) : lo;
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, n - 1);
    for (std::int64_t h = lo; h <= hi; ++h) hours[static_cast<std::size_t>(h)] = true;
}

inline std::vector<std::pair<std::int64_t, std::int64_t>> to_runs(const std::vector<bool>& hours) {
    std::vector<std::pair<std::int64_t, std::int64_t>> runs;
    const auto n = static_cast<std::int64_t>(hours.size());
    for (std::int64_t h = 0; h < n;) {
        if (!hours[static_cast<std::size_t>(h)]) {
            ++h;
            continue;
        }
        std::int64_t e = h;
        while (e < n && hours[static_cast<std::size_t>(e)]) ++e;
        runs.emplace_back(h, e);
        h = e;
    }
    return runs;
}

}  // namespace gendetail

// Emits the five source tables plus a self-computed ground-truth ledger:
// who survives cohort selection and why not, every hourly aggregate, every
// injected outlier, every treated hour, every outcome label. Single
// threaded and draw-order stable, so the seed pins the output bytes.
inline GenOutput generate(const GenParams& p) {
    validate_params(p);
    const auto& catalog = gen_catalog();
    Rng rng(p.seed);
    GenOutput out;
    SourceDataset& ds = out.dataset;
    GroundTruth& gt = out.truth;
    gt.seed = p.seed;
    gt.n_subjects = p.n_subjects;
    for (const auto& v : catalog) gt.outliers.emplace(v.name, OutlierTruth{});

    const std::vector<std::string> ethnicities = {"WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER"};
    const std::vector<double> ethnicity_cum = {0.62, 0.74, 0.83, 0.88, 1.0};
    const std::vector<std::string> insurances = {"Medicare", "Private", "Medicaid", "Government"};
    const std::vector<double> insurance_cum = {0.45, 0.80, 0.92, 1.0};
    const std::vector<std::string> admission_types = {"EMERGENCY", "ELECTIVE", "URGENT"};
    const std::vector<double> admission_cum = {0.72, 0.90, 1.0};
    const std::vector<std::string> careunits = {"MICU", "SICU", "CCU", "CSRU", "TSICU"};
    const std::vector<double> careunit_cum = {0.38, 0.60, 0.76, 0.90, 1.0};

    std::int64_t next_hadm = 100000;
    std::int64_t next_stay = 200000;

    for (std::int64_t i = 0; i < p.n_subjects; ++i) {
        const std::int64_t subject_id = 10000 + i;
        PatientRow patient;
        patient.subject_id = subject_id;
        patient.gender = rng.bernoulli(0.5) ? "F" : "M";
        patient.ethnicity = ethnicities[rng.categorical(ethnicity_cum)];
        patient.insurance = insurances[rng.categorical(insurance_cum)];

        std::int64_t age;
        const double age_draw = rng.uniform();
        if (age_draw < p.minor_fraction)
            age = rng.uniform_int(5, 14);
        else if (age_draw < p.minor_fraction + p.masked_age_fraction)
            age = 300;
        else
            age = rng.uniform_int(16, 89);

        // First ICU admission, second precision, spread over 50 years.
        const int in_year = static_cast<int>(2100 + rng.uniform_int(0, 49));
        const unsigned in_month = static_cast<unsigned>(rng.uniform_int(1, 12));
        const unsigned in_day = static_cast<unsigned>(rng.uniform_int(1, 28));
        const Timestamp intime1 = make_timestamp(
            in_year, in_month, in_day, static_cast<unsigned>(rng.uniform_int(0, 23)),
            static_cast<unsigned>(rng.uniform_int(0, 59)),
            static_cast<unsigned>(rng.uniform_int(0, 59)));

        // dob with the same month/day (never past the 28th) means the
        // birthday has arrived by intime1, so the completed-year age at
        // intime1 is exactly `age` — including the 300 mask.
        patient.dob = make_timestamp(in_year - static_cast<int>(age), in_month, in_day);
        ds.patients.push_back(patient);

        const int n_stays = rng.bernoulli(p.repeat_stay_fraction) ? 2 : 1;
        std::string first_status;
        if (age < 15) {
            first_status = "age";
        } else {
            const double los_draw = rng.uniform();
            if (los_draw < p.short_stay_fraction)
                first_status = "too_short";
            else if (los_draw < p.short_stay_fraction + p.long_stay_fraction)
                first_status = "too_long";
            else
                first_status = "selected";
        }

        Timestamp prev_outtime{};
        for (int k = 0; k < n_stays; ++k) {
            const std::string status = k == 0 ? first_status : "not_first";
            Timestamp intime;
            std::int64_t los_sec;
            if (k == 0) {
                intime = intime1;
                if (first_status == "too_short")
                    los_sec = rng.uniform_int(2 * 3600, 12 * 3600 - 1);
                else if (first_status == "too_long")
                    los_sec = rng.uniform_int(240 * 3600, 400 * 3600);
                else {
                    const double hours =
                        std::min(12.0 + rng.exponential(p.mean_extra_los_hours), 239.5);
                    los_sec = static_cast<std::int64_t>(hours * 3600.0);
                }
            } else {
                intime = add_seconds(prev_outtime, rng.uniform_int(24 * 3600, 1000 * 3600));
                los_sec = rng.uniform_int(6 * 3600, 300 * 3600);
            }
            const Timestamp outtime = add_seconds(intime, los_sec);
            prev_outtime = outtime;
            const std::int64_t n_hours = ceil_div_positive(los_sec, kSecondsPerHour);
            const std::int64_t hadm_id = next_hadm++;
            const std::int64_t icustay_id = next_stay++;
            const bool selected = status == "selected";

            StayTruth st;
            st.subject_id = subject_id;
            st.hadm_id = hadm_id;
            st.icustay_id = icustay_id;
            st.status = status;
            st.age = age;
            st.los_icu_hours = static_cast<double>(los_sec) / 3600.0;
            st.n_hours = n_hours;

            AdmissionRow adm;
            adm.hadm_id = hadm_id;
            adm.subject_id = subject_id;
            adm.admittime = add_seconds(intime, -rng.uniform_int(0, 48 * 3600));
            adm.admission_type = admission_types[rng.categorical(admission_cum)];
            if (selected && rng.bernoulli(p.mortality_rate)) {
                st.mort_hosp = true;
                if (rng.bernoulli(0.7)) {
                    st.mort_icu = true;
                    adm.deathtime =
                        add_seconds(intime, rng.uniform_int(los_sec * 3 / 10, los_sec));
                } else {
                    adm.deathtime = add_seconds(outtime, rng.uniform_int(3600, 72 * 3600));
                }
                adm.dischtime = *adm.deathtime;
                adm.hospital_expire_flag = true;
            } else {
                adm.dischtime = add_seconds(outtime, rng.uniform_int(0, 72 * 3600));
                adm.hospital_expire_flag = false;
            }
            ds.admissions.push_back(adm);

            StayRow stay;
            stay.icustay_id = icustay_id;
            stay.hadm_id = hadm_id;
            stay.subject_id = subject_id;
            stay.intime = intime;
            stay.outtime = outtime;
            stay.first_careunit = careunits[rng.categorical(careunit_cum)];
            ds.stays.push_back(stay);

            if (selected) ++gt.n_selected;
            else if (status == "not_first") ++gt.n_not_first;
            else if (status == "age") ++gt.n_age;
            else if (status == "too_short") ++gt.n_too_short;
            else ++gt.n_too_long;

            auto emit_event = [&](std::optional<std::int64_t> stay_key, std::int64_t itemid,
                                  std::int64_t offset_sec, double value, std::string uom) {
                EventRow e;
                e.subject_id = subject_id;
                e.hadm_id = hadm_id;
                e.icustay_id = stay_key;
                e.itemid = itemid;
                e.charttime = add_seconds(intime, offset_sec);
                e.valuenum = value;
                e.valueuom = std::move(uom);
                ds.events.push_back(std::move(e));
            };

            // --- measurement events ---
            const double rate_scale = selected ? 1.0 : 0.25;
            std::map<std::pair<std::int32_t, std::int32_t>, std::vector<double>> cells;
            for (std::size_t v = 0; v < catalog.size(); ++v) {
                const GenVariable& var = catalog[v];
                double baseline = var.base_mean + var.between_sigma * rng.normal(0.0, 1.0);
                if (selected && st.mort_hosp)
                    baseline += p.signal_strength * var.signal_share * var.between_sigma;
                for (std::int64_t h = 0; h < n_hours; ++h) {
                    const std::int64_t slot_start = h * kSecondsPerHour;
                    const std::int64_t slot_dur =
                        std::min<std::int64_t>(kSecondsPerHour, los_sec - slot_start);
                    const double lambda = var.rate_per_hour * rate_scale *
                                          static_cast<double>(slot_dur) /
                                          static_cast<double>(kSecondsPerHour);
                    const int k_events = rng.poisson(lambda);
                    for (int ev = 0; ev < k_events; ++ev) {
                        const std::int64_t offset = slot_start + rng.uniform_int(0, slot_dur - 1);

                        if (!selected) {
                            // Excluded stays still chart, in canonical units
                            // with safe values; the pipeline files every one
                            // of these under out-of-stay.
                            double value = rng.normal(baseline, var.within_sigma);
                            if (var.has_bounds) {
                                const double m = 0.02 * (var.valid_high - var.valid_low);
                                value = std::clamp(value, var.valid_low + m, var.valid_high - m);
                            }
                            emit_event(icustay_id, var.itemids[0], offset, value, "");
                            ++gt.n_out_of_stay;
                            continue;
                        }

                        const double anomaly = rng.uniform();
                        if (var.has_bounds && anomaly < p.outlier_drop_rate) {
                            const double span =
                                std::max(var.outlier_high - var.outlier_low, 1.0);
                            const double value =
                                rng.bernoulli(0.5)
                                    ? var.outlier_low - rng.uniform(0.2, 1.0) * (0.2 * span + 1.0)
                                    : var.outlier_high + rng.uniform(0.2, 1.0) * (0.2 * span + 1.0);
                            emit_event(icustay_id, var.itemids[0], offset, value, "");
                            ++gt.outliers[var.name].dropped;
                            continue;
                        }
                        if (var.has_bounds &&
                            anomaly < p.outlier_drop_rate + p.outlier_clamp_rate) {
                            const bool low_gap = var.valid_low > var.outlier_low;
                            const bool high_gap = var.outlier_high > var.valid_high;
                            const bool use_low = low_gap && (!high_gap || rng.bernoulli(0.5));
                            const double lo = use_low ? var.outlier_low : var.valid_high;
                            const double hi = use_low ? var.valid_low : var.outlier_high;
                            const double m = 0.05 * (hi - lo);
                            const double value = rng.uniform(lo + m, hi - m);
                            emit_event(icustay_id, var.itemids[0], offset, value, "");
                            auto& oc = gt.outliers[var.name];
                            use_low ? ++oc.clamped_low : ++oc.clamped_high;
                            cells[{static_cast<std::int32_t>(h), static_cast<std::int32_t>(v)}]
                                .push_back(use_low ? var.valid_low : var.valid_high);
                            continue;
                        }

                        double value = rng.normal(baseline, var.within_sigma);
                        if (var.has_bounds) {
                            const double m = 0.02 * (var.valid_high - var.valid_low);
                            value = std::clamp(value, var.valid_low + m, var.valid_high - m);
                        }

                        // Encode in an alternate unit for a slice of events;
                        // the planned cell value is the reconverted double,
                        // computed with the same arithmetic the consumer
                        // will apply, so the plan survives the round trip.
                        double observed = value;
                        std::int64_t itemid;
                        std::string uom;
                        double emitted = value;
                        switch (var.unit_class) {
                            case UnitClass::temperature: {
                                if (rng.bernoulli(p.unit_variant_fraction)) {
                                    itemid = rng.bernoulli(0.5) ? 678 : 223761;
                                    emitted = value * 9.0 / 5.0 + 32.0;
                                    uom = rng.bernoulli(0.5) ? "F" : "\xc2\xb0""F";
                                    observed = (emitted - 32.0) * 5.0 / 9.0;
                                } else {
                                    itemid = rng.bernoulli(0.5) ? 676 : 223762;
                                    uom = rng.bernoulli(0.5) ? "C" : "";
                                }
                                break;
                            }
                            case UnitClass::weight: {
                                itemid = var.itemids[rng.uniform_int(
                                    0, static_cast<std::int64_t>(var.itemids.size()) - 1)];
                                if (rng.bernoulli(p.unit_variant_fraction)) {
                                    if (rng.bernoulli(0.2)) {
                                        emitted = value / 0.0283495231;
                                        uom = "oz";
                                        observed = emitted * 0.0283495231;
                                    } else {
                                        emitted = value / 0.45359237;
                                        uom = rng.bernoulli(0.5) ? "lb" : "lbs";
                                        observed = emitted * 0.45359237;
                                    }
                                } else {
                                    uom = "kg";
                                }
                                break;
                            }
                            case UnitClass::height: {
                                itemid = var.itemids[rng.uniform_int(
                                    0, static_cast<std::int64_t>(var.itemids.size()) - 1)];
                                if (rng.bernoulli(p.unit_variant_fraction)) {
                                    emitted = value / 2.54;
                                    uom = "in";
                                    observed = emitted * 2.54;
                                } else {
                                    uom = "cm";
                                }
                                break;
                            }
                            case UnitClass::none: {
                                itemid = var.itemids[rng.uniform_int(
                                    0, static_cast<std::int64_t>(var.itemids.size()) - 1)];
                                uom = "";
                                break;
                            }
                        }

                        std::optional<std::int64_t> stay_key = icustay_id;
                        if (itemid >= 50000 && rng.bernoulli(p.lab_unkeyed_fraction))
                            stay_key = std::nullopt;  // attacher must recover the stay
                        emit_event(stay_key, itemid, offset, emitted, std::move(uom));
                        cells[{static_cast<std::int32_t>(h), static_cast<std::int32_t>(v)}]
                            .push_back(observed);
                    }
                }
            }

            for (const auto& [key, values] : cells) {
                CellTruth ct;
                ct.icustay_id = icustay_id;
                ct.hour = key.first;
                ct.var = key.second;
                ct.count = static_cast<std::int64_t>(values.size());
                double sum = 0.0;
                for (double x : values) sum += x;
                ct.mean = sum / static_cast<double>(values.size());
                if (values.size() > 1) {
                    double ssd = 0.0;
                    for (double x : values) ssd += (x - ct.mean) * (x - ct.mean);
                    ct.std = std::sqrt(ssd / static_cast<double>(values.size() - 1));
                }
                gt.cells.push_back(std::move(ct));
            }

            if (!selected) {
                // A few treatment records land on excluded stays; the grid
                // builder must ignore them, so the ledger marks nothing.
                if (rng.bernoulli(0.2)) {
                    InterventionEventRow ev;
                    ev.icustay_id = icustay_id;
                    ev.name = kInterventionColumns[0];
                    ev.starttime = add_seconds(intime, rng.uniform_int(0, los_sec / 2));
                    ev.endtime = add_seconds(ev.starttime, rng.uniform_int(1800, 12 * 3600));
                    ds.intervention_events.push_back(std::move(ev));
                }
                gt.stays.push_back(std::move(st));
                continue;
            }

            // --- anomalies with known accounting, cohort stays only ---
            const int n_oos = rng.poisson(0.5);
            for (int j = 0; j < n_oos; ++j) {
                double value = std::clamp(rng.normal(85.0, 6.0), 40.0, 180.0);
                const std::int64_t offset =
                    rng.bernoulli(0.5) ? -rng.uniform_int(60, 24 * 3600)
                                       : n_hours * kSecondsPerHour + rng.uniform_int(0, 24 * 3600);
                emit_event(icustay_id, 211, offset, value, "");
                ++gt.n_out_of_stay;
            }
            const int n_unmapped = rng.poisson(0.4);
            for (int j = 0; j < n_unmapped; ++j) {
                emit_event(icustay_id, 99999, rng.uniform_int(0, los_sec - 1),
                           rng.uniform(0.0, 10.0), "");
                ++gt.n_unmapped;
            }
            const int n_uerr = rng.poisson(0.25);
            for (int j = 0; j < n_uerr; ++j) {
                emit_event(icustay_id, 762, rng.uniform_int(0, los_sec - 1),
                           rng.uniform(8.0, 20.0), "stone");
                ++gt.n_unit_errors;
            }
            const int n_stray = rng.poisson(0.1);
            for (int j = 0; j < n_stray; ++j) {
                // Unkeyed lab charted well before the unit: no stay of this
                // admission contains it, so attachment discards it.
                emit_event(std::nullopt, 50931, -rng.uniform_int(2 * 3600, 40 * 3600),
                           rng.uniform(80.0, 180.0), "");
                ++gt.n_attach_dropped;
            }

            // --- treatments ---
            std::vector<std::vector<bool>> cols(
                kInterventionColumns.size(),
                std::vector<bool>(static_cast<std::size_t>(n_hours), false));
            auto emit_span = [&](std::size_t col, std::int64_t s_rel, std::int64_t e_rel) {
                InterventionEventRow ev;
                ev.icustay_id = icustay_id;
                ev.name = kInterventionColumns[col];
                ev.starttime = add_seconds(intime, s_rel);
                ev.endtime = add_seconds(intime, e_rel);
                ds.intervention_events.push_back(std::move(ev));
                gendetail::mark_continuous(cols[col], s_rel, e_rel);
            };

            if (rng.bernoulli(0.35)) {
                const int episodes = rng.bernoulli(0.25) ? 2 : 1;
                for (int ep = 0; ep < episodes; ++ep) {
                    const std::int64_t s = rng.uniform_int(-7200, los_sec * 2 / 3);
                    emit_span(0, s, s + rng.uniform_int(1800, 24 * 3600));  // vent
                }
            }
            if (rng.bernoulli(0.15)) {
                const std::int64_t s = rng.uniform_int(0, los_sec * 2 / 3);
                emit_span(13, s, s + rng.uniform_int(2 * 3600, 8 * 3600));  // nivdurations
            }
            if (rng.bernoulli(0.02)) {
                const std::int64_t s = rng.uniform_int(0, los_sec * 2 / 3);
                emit_span(1, s, s + rng.uniform_int(3600, 6 * 3600));  // direct vaso record
            }
            if (rng.bernoulli(0.03)) {
                const int pushes = rng.bernoulli(0.5) ? 2 : 1;  // adenosine: instantaneous
                for (int j = 0; j < pushes; ++j) {
                    const std::int64_t s = rng.uniform_int(0, los_sec - 1);
                    emit_span(2, s, s);
                }
            }
            struct DrugPlan {
                std::size_t col;
                double prob;
            };
            static constexpr std::array<DrugPlan, 8> drugs = {{{3, 0.04},
                                                               {4, 0.08},
                                                               {5, 0.05},
                                                               {6, 0.01},
                                                               {7, 0.03},
                                                               {8, 0.12},
                                                               {9, 0.10},
                                                               {10, 0.05}}};
            for (const auto& d : drugs) {
                if (!rng.bernoulli(d.prob)) continue;
                const std::int64_t s = rng.uniform_int(-3600, los_sec * 3 / 4);
                emit_span(d.col, s, s + rng.uniform_int(3600, 10 * 3600));
            }
            const int n_colloid = rng.poisson(0.25);
            for (int j = 0; j < n_colloid; ++j) {
                const std::int64_t s = rng.uniform_int(0, los_sec - 1);
                emit_span(11, s, s);
            }
            const int n_cryst = rng.poisson(0.7);
            for (int j = 0; j < n_cryst; ++j) {
                const std::int64_t s = rng.uniform_int(0, los_sec - 1);
                emit_span(12, s, s);
            }

            for (std::int64_t h = 0; h < n_hours; ++h) {
                bool any_drug = false;
                for (std::size_t c = kFirstDrugColumn; c <= kLastDrugColumn; ++c)
                    any_drug = any_drug || cols[c][static_cast<std::size_t>(h)];
                if (any_drug) cols[kVasoColumn][static_cast<std::size_t>(h)] = true;
            }
            for (std::size_t c = 0; c < cols.size(); ++c) {
                auto runs = gendetail::to_runs(cols[c]);
                if (!runs.empty()) st.interventions.emplace(kInterventionColumns[c], std::move(runs));
            }

            gt.stays.push_back(std::move(st));
        }
    }

    gt.n_stays = static_cast<std::int64_t>(ds.stays.size());
    gt.n_events = static_cast<std::int64_t>(ds.events.size());
    gt.n_intervention_events = static_cast<std::int64_t>(ds.intervention_events.size());
    return out;
}

// --- sidecar files ---

inline void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["seed"] = gt.seed;
    j["counts"] = {{"n_subjects", gt.n_subjects},
                   {"n_stays", gt.n_stays},
                   {"n_events", gt.n_events},
                   {"n_intervention_events", gt.n_intervention_events},
                   {"n_attach_dropped", gt.n_attach_dropped},
                   {"n_unmapped", gt.n_unmapped},
                   {"n_unit_errors", gt.n_unit_errors},
                   {"n_out_of_stay", gt.n_out_of_stay}};
    j["exclusions"] = {{"not_first", gt.n_not_first},
                       {"age", gt.n_age},
                       {"too_short", gt.n_too_short},
                       {"too_long", gt.n_too_long},
                       {"selected", gt.n_selected}};
    nlohmann::json outliers = nlohmann::json::object();
    for (const auto& [name, oc] : gt.outliers)
        outliers[name] = {{"clamped_low", oc.clamped_low},
                          {"clamped_high", oc.clamped_high},
                          {"dropped", oc.dropped}};
    j["outliers"] = std::move(outliers);
    nlohmann::json stays = nlohmann::json::array();
    for (const auto& st : gt.stays) {
        nlohmann::json s = {{"subject_id", st.subject_id},
                            {"hadm_id", st.hadm_id},
                            {"icustay_id", st.icustay_id},
                            {"status", st.status},
                            {"age", st.age},
                            {"mort_icu", st.mort_icu},
                            {"mort_hosp", st.mort_hosp},
                            {"los_icu_hours", st.los_icu_hours},
                            {"n_hours", st.n_hours}};
        nlohmann::json iv = nlohmann::json::object();
        for (const auto& [name, runs] : st.interventions) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [s0, s1] : runs) arr.push_back({s0, s1});
            iv[name] = std::move(arr);
        }
        s["interventions"] = std::move(iv);
        stays.push_back(std::move(s));
    }
    j["stays"] = std::move(stays);
    j["cells_file"] = "ground_truth_cells.csv";
    std::ofstream jf(dir / "ground_truth.json", std::ios::binary);
    jf << j.dump(1) << "\n";

    const auto& catalog = gen_catalog();
    std::ofstream cf(dir / "ground_truth_cells.csv", std::ios::binary);
    write_csv_row(cf, {"icustay_id", "hour", "variable", "mean", "count", "std"});
    for (const auto& c : gt.cells)
        write_csv_row(cf, {std::to_string(c.icustay_id), std::to_string(c.hour),
                           catalog[static_cast<std::size_t>(c.var)].name, format_double(c.mean),
                           std::to_string(c.count), c.std ? format_double(*c.std) : ""});
}

inline GroundTruth load_ground_truth(const std::filesystem::path& dir) {
    std::ifstream jf(dir / "ground_truth.json", std::ios::binary);
    if (!jf) throw Error(ErrorCode::missing_file, (dir / "ground_truth.json").string());
    nlohmann::json j;
    try {
        jf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("ground_truth.json: ") + e.what());
    }
    GroundTruth gt;
    gt.seed = j.at("seed").get<std::uint64_t>();
    const auto& counts = j.at("counts");
    gt.n_subjects = counts.at("n_subjects").get<std::int64_t>();
    gt.n_stays = counts.at("n_stays").get<std::int64_t>();
    gt.n_events = counts.at("n_events").get<std::int64_t>();
    gt.n_intervention_events = counts.at("n_intervention_events").get<std::int64_t>();
    gt.n_attach_dropped = counts.at("n_attach_dropped").get<std::int64_t>();
    gt.n_unmapped = counts.at("n_unmapped").get<std::int64_t>();
    gt.n_unit_errors = counts.at("n_unit_errors").get<std::int64_t>();
    gt.n_out_of_stay = counts.at("n_out_of_stay").get<std::int64_t>();
    const auto& ex = j.at("exclusions");
    gt.n_not_first = ex.at("not_first").get<std::int64_t>();
    gt.n_age = ex.at("age").get<std::int64_t>();
    gt.n_too_short = ex.at("too_short").get<std::int64_t>();
    gt.n_too_long = ex.at("too_long").get<std::int64_t>();
    gt.n_selected = ex.at("selected").get<std::int64_t>();
    for (const auto& [name, oc] : j.at("outliers").items()) {
        OutlierTruth t;
        t.clamped_low = oc.at("clamped_low").get<std::int64_t>();
        t.clamped_high = oc.at("clamped_high").get<std::int64_t>();
        t.dropped = oc.at("dropped").get<std::int64_t>();
        gt.outliers.emplace(name, t);
    }
    for (const auto& s : j.at("stays")) {
        StayTruth st;
        st.subject_id = s.at("subject_id").get<std::int64_t>();
        st.hadm_id = s.at("hadm_id").get<std::int64_t>();
        st.icustay_id = s.at("icustay_id").get<std::int64_t>();
        st.status = s.at("status").get<std::string>();
        st.age = s.at("age").get<std::int64_t>();
        st.mort_icu = s.at("mort_icu").get<bool>();
        st.mort_hosp = s.at("mort_hosp").get<bool>();
        st.los_icu_hours = s.at("los_icu_hours").get<double>();
        st.n_hours = s.at("n_hours").get<std::int64_t>();
        for (const auto& [name, runs] : s.at("interventions").items()) {
            std::vector<std::pair<std::int64_t, std::int64_t>> rs;
            for (const auto& r : runs)
                rs.emplace_back(r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>());
            st.interventions.emplace(name, std::move(rs));
        }
        gt.stays.push_back(std::move(st));
    }

    const auto& catalog = gen_catalog();
    std::map<std::string, std::int32_t> var_index;
    for (std::size_t v = 0; v < catalog.size(); ++v)
        var_index.emplace(catalog[v].name, static_cast<std::int32_t>(v));
    std::ifstream cf(dir / "ground_truth_cells.csv", std::ios::binary);
    if (!cf) throw Error(ErrorCode::missing_file, (dir / "ground_truth_cells.csv").string());
    CsvReader reader(cf, "ground_truth_cells.csv");
    std::vector<std::string> row;
    reader.next_row(row);  // header
    while (reader.next_row(row)) {
        CellTruth c;
        c.icustay_id = *try_parse_int(row[0]);
        c.hour = static_cast<std::int32_t>(*try_parse_int(row[1]));
        c.var = var_index.at(row[2]);
        c.mean = *try_parse_double(row[3]);
        c.count = *try_parse_int(row[4]);
        if (!row[5].empty()) c.std = *try_parse_double(row[5]);
        gt.cells.push_back(c);
    }
    return gt;
}

}  // namespace ehrgrid
