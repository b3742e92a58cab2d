#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrgrid/cohort.hpp"
#include "ehrgrid/error.hpp"
#include "ehrgrid/interventions.hpp"
#include "ehrgrid/rng.hpp"
#include "ehrgrid/time.hpp"
#include "ehrgrid/timeseries.hpp"

namespace ehrgrid {

inline constexpr std::int64_t kFixedWindowHours = 24;   // feature window of fixed tasks
inline constexpr std::int64_t kFixedMinGridHours = 30;  // eligibility floor for fixed tasks
inline constexpr std::int64_t kDynamicInputHours = 6;
inline constexpr std::int64_t kDynamicGapHours = 6;
inline constexpr std::int64_t kDynamicPredHours = 4;

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct SplitRatios {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

struct SplitAssignment {
    std::unordered_map<std::int64_t, Split> by_subject;
    SplitRatios ratios;
    std::uint64_t seed = 0;

    Split of(std::int64_t subject_id) const { return by_subject.at(subject_id); }
};

// Hash-based assignment: each subject's bucket is a pure function of
// (subject_id, seed), so membership never depends on cohort ordering or
// on which other subjects are present.
inline SplitAssignment split_cohort(const std::vector<CohortRow>& cohort, SplitRatios ratios,
                                    std::uint64_t seed) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw Error(ErrorCode::bad_ratios, "split ratios must be non-negative and sum to 1");
    SplitAssignment out;
    out.ratios = ratios;
    out.seed = seed;
    const std::uint64_t salt = splitmix64(seed);
    for (const auto& row : cohort) {
        std::uint64_t h = splitmix64(static_cast<std::uint64_t>(row.subject_id) ^ salt);
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        Split s = u < ratios.train            ? Split::train
                  : u < ratios.train + ratios.val ? Split::val
                                                  : Split::test;
        out.by_subject.emplace(row.subject_id, s);
    }
    return out;
}

struct VarStats {
    double mean = 0.0;
    double std = 1.0;      // floored at 1e-6; (0, 1) when never observed
    std::int64_t n = 0;    // observations behind the estimate
    bool degenerate() const { return n < 2 || std <= 1e-6; }
};

// Per-variable centering constants from train-split stays only. The
// restriction arguments let fixed-task prep compute them over exactly the
// population that becomes features (hours below max_hour, stays with at
// least min_stay_hours), which is what makes the standardized observed
// values come out at mean 0 / std 1 precisely rather than approximately.
inline std::vector<VarStats> compute_train_stats(const HourlyGrid& grid,
                                                 const SplitAssignment& split,
                                                 std::int64_t max_hour = -1,
                                                 std::int64_t min_stay_hours = 0) {
    const std::size_t n_vars = grid.variables.size();
    std::vector<double> sum(n_vars, 0.0);
    std::vector<std::int64_t> n(n_vars, 0);
    auto in_scope = [&](const GridStay& s, const CellEntry& c) {
        return s.n_hours >= min_stay_hours && (max_hour < 0 || c.hour < max_hour);
    };
    for (const auto& s : grid.stays) {
        if (split.of(s.subject_id) != Split::train) continue;
        for (const auto& c : s.cells)
            if (in_scope(s, c)) {
                sum[static_cast<std::size_t>(c.var)] += c.cell.mean;
                ++n[static_cast<std::size_t>(c.var)];
            }
    }
    std::vector<double> ssd(n_vars, 0.0);
    for (const auto& s : grid.stays) {
        if (split.of(s.subject_id) != Split::train) continue;
        for (const auto& c : s.cells)
            if (in_scope(s, c)) {
                std::size_t v = static_cast<std::size_t>(c.var);
                double d = c.cell.mean - sum[v] / static_cast<double>(n[v]);
                ssd[v] += d * d;
            }
    }
    std::vector<VarStats> out(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
        out[v].n = n[v];
        if (n[v] == 0) continue;  // (0, 1) fallback
        out[v].mean = sum[v] / static_cast<double>(n[v]);
        out[v].std = n[v] > 1 ? std::max(std::sqrt(ssd[v] / static_cast<double>(n[v] - 1)), 1e-6)
                              : 1e-6;
    }
    return out;
}

struct Triplet {
    double value = 0.0;  // standardized
    double mask = 0.0;
    double delta = 0.0;  // hours since last observation; sentinel before the first
};

// The three-channel representation of one variable over a window: observed
// hours pass through; gaps are forward filled, falling back to the
// patient's in-window mean, then to the train-set mean — all in raw units,
// standardized at the end. The window is self-contained on purpose: no
// value outside [h0, h0+len) can influence the output, which is the
// no-leakage guarantee the samples rely on.
inline void impute_window(const GridStay& stay, std::int32_t var, std::int64_t h0,
                          std::int64_t len, const VarStats& stats, std::int64_t sentinel,
                          Triplet* out) {
    double window_sum = 0.0;
    std::int64_t window_n = 0;
    for (std::int64_t k = 0; k < len; ++k) {
        if (const HourlyCell* c = stay.find(static_cast<std::int32_t>(h0 + k), var)) {
            window_sum += c->mean;
            ++window_n;
        }
    }
    const double patient_mean = window_n > 0 ? window_sum / static_cast<double>(window_n) : 0.0;

    double last_value = 0.0;
    std::int64_t last_hour = -1;
    for (std::int64_t k = 0; k < len; ++k) {
        const HourlyCell* c = stay.find(static_cast<std::int32_t>(h0 + k), var);
        double raw;
        if (c) {
            raw = c->mean;
            last_value = c->mean;
            last_hour = k;
            out[k].mask = 1.0;
            out[k].delta = 0.0;
        } else {
            if (last_hour >= 0)
                raw = last_value;
            else if (window_n > 0)
                raw = patient_mean;
            else
                raw = stats.mean;
            out[k].mask = 0.0;
            out[k].delta = last_hour >= 0 ? static_cast<double>(k - last_hour)
                                          : static_cast<double>(sentinel);
        }
        out[k].value = (raw - stats.mean) / stats.std;
    }
}

inline const std::array<const char*, 3> kTripletStats = {"value", "mask", "delta"};

// Feature vector layout shared by both frameworks: variable-major, then
// value/mask/delta, then hour. Names look like heart_rate__value__h3.
inline std::vector<std::string> triplet_feature_names(const std::vector<std::string>& variables,
                                                      std::int64_t window) {
    std::vector<std::string> names;
    names.reserve(variables.size() * 3 * static_cast<std::size_t>(window));
    for (const auto& var : variables)
        for (const char* stat : kTripletStats)
            for (std::int64_t k = 0; k < window; ++k)
                names.push_back(var + "__" + stat + "__h" + std::to_string(k));
    return names;
}

struct FixedSample {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t icustay_id = 0;
    Split split = Split::train;
    std::vector<double> features;
    bool mort_icu = false;
    bool mort_hosp = false;
    bool los3 = false;
    bool los7 = false;
};

struct FixedSampleSet {
    std::vector<std::string> variables;
    std::vector<std::string> feature_names;
    std::vector<VarStats> stats;
    std::int64_t sentinel = kFixedWindowHours + 1;
    std::vector<FixedSample> samples;  // cohort order
};

// One sample per stay with at least 30 grid hours, features strictly from
// hours 0-23. LOS labels use strict >: exactly 72 hours is not "more than
// 3 days".
inline FixedSampleSet build_fixed_samples(const HourlyGrid& grid,
                                          const std::vector<CohortRow>& cohort,
                                          const SplitAssignment& split) {
    if (grid.stays.size() != cohort.size())
        throw Error(ErrorCode::internal_error, "grid and cohort are out of step");
    FixedSampleSet out;
    out.variables = grid.variables;
    out.feature_names = triplet_feature_names(grid.variables, kFixedWindowHours);
    out.stats = compute_train_stats(grid, split, kFixedWindowHours, kFixedMinGridHours);

    const std::size_t n_vars = grid.variables.size();
    std::vector<Triplet> window(static_cast<std::size_t>(kFixedWindowHours));
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const GridStay& gs = grid.stays[i];
        const CohortRow& row = cohort[i];
        if (gs.icustay_id != row.icustay_id)
            throw Error(ErrorCode::internal_error, "grid and cohort are out of step");
        if (gs.n_hours < kFixedMinGridHours) continue;
        FixedSample s;
        s.subject_id = row.subject_id;
        s.hadm_id = row.hadm_id;
        s.icustay_id = row.icustay_id;
        s.split = split.of(row.subject_id);
        s.features.resize(n_vars * 3 * static_cast<std::size_t>(kFixedWindowHours));
        for (std::size_t v = 0; v < n_vars; ++v) {
            impute_window(gs, static_cast<std::int32_t>(v), 0, kFixedWindowHours, out.stats[v],
                          out.sentinel, window.data());
            double* base = s.features.data() + v * 3 * static_cast<std::size_t>(kFixedWindowHours);
            for (std::int64_t k = 0; k < kFixedWindowHours; ++k) {
                base[k] = window[static_cast<std::size_t>(k)].value;
                base[kFixedWindowHours + k] = window[static_cast<std::size_t>(k)].mask;
                base[2 * kFixedWindowHours + k] = window[static_cast<std::size_t>(k)].delta;
            }
        }
        s.mort_icu = row.mort_icu;
        s.mort_hosp = row.mort_hosp;
        s.los3 = row.los_icu_hours > 72.0;
        s.los7 = row.los_icu_hours > 168.0;
        out.samples.push_back(std::move(s));
    }
    return out;
}

enum class Class4 { Onset, StayOn, Wean, StayOff };

inline const char* class4_name(Class4 c) {
    switch (c) {
        case Class4::Onset: return "Onset";
        case Class4::StayOn: return "StayOn";
        case Class4::Wean: return "Wean";
        case Class4::StayOff: return "StayOff";
    }
    return "?";
}

inline const std::array<Class4, 4> kClass4All = {Class4::Onset, Class4::StayOn, Class4::Wean,
                                                 Class4::StayOff};

// The state entering the prediction window decides the class family; the
// window content picks within it. Off + any on-hour is an onset even if
// treatment flickers; on + any off-hour is a wean.
inline Class4 label_window(bool state_before, const std::array<bool, 4>& window) {
    bool any_on = window[0] || window[1] || window[2] || window[3];
    bool any_off = !(window[0] && window[1] && window[2] && window[3]);
    if (!state_before) return any_on ? Class4::Onset : Class4::StayOff;
    return any_off ? Class4::Wean : Class4::StayOn;
}

// Buckets mirror the usual cohort-summary table; the 300 privacy mask
// lands in >70 with the rest of the elderly.
inline std::string age_bucket(std::int64_t age) {
    if (age <= 30) return "<30";
    if (age <= 50) return "31-50";
    if (age <= 70) return "51-70";
    return ">70";
}

struct StaticVocab {
    // field name -> sorted category values, in one-hot column order
    std::vector<std::pair<std::string, std::vector<std::string>>> fields;
};

inline StaticVocab build_static_vocab(const std::vector<CohortRow>& cohort) {
    std::set<std::string> gender, bucket, ethnicity, careunit, admission;
    for (const auto& r : cohort) {
        gender.insert(r.gender);
        bucket.insert(age_bucket(r.age));
        ethnicity.insert(r.ethnicity);
        careunit.insert(r.first_careunit);
        admission.insert(r.admission_type);
    }
    StaticVocab v;
    auto add = [&](const char* name, const std::set<std::string>& values) {
        v.fields.emplace_back(name, std::vector<std::string>(values.begin(), values.end()));
    };
    add("gender", gender);
    add("age_bucket", bucket);
    add("ethnicity", ethnicity);
    add("first_careunit", careunit);
    add("admission_type", admission);
    return v;
}

struct DynamicSample {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t icustay_id = 0;
    std::int64_t t = 0;  // anchor: first input hour
    Split split = Split::train;
    std::vector<double> features;
    Class4 label = Class4::StayOff;
};

struct DynamicSampleSet {
    std::string target;
    std::vector<std::string> variables;
    std::vector<std::string> feature_names;  // triplets, then one-hot statics, then time_of_day
    std::vector<VarStats> stats;
    std::vector<VarStats> delta_stats;  // per-variable rescaling applied to delta channels
    StaticVocab vocab;
    std::int64_t sentinel = kDynamicInputHours + 1;
    std::vector<DynamicSample> samples;  // ordered by (subject_id, t)
};

// Sliding anchors with stride 1: input [t, t+6), gap [t+6, t+12), label
// from the state at t+11 and the window [t+12, t+16), which must lie
// inside the stay. Static one-hots and the wall-clock hour of the window
// start ride along with the triplets.
inline DynamicSampleSet build_dynamic_samples(const HourlyGrid& grid,
                                              const InterventionGrid& igrid,
                                              const std::vector<CohortRow>& cohort,
                                              const SplitAssignment& split,
                                              const std::string& target) {
    auto target_col = intervention_column(target);
    if (!target_col)
        throw Error(ErrorCode::unknown_intervention_name,
                    "unknown prediction target '" + target + "'");
    if (grid.stays.size() != cohort.size() || igrid.stays.size() != cohort.size())
        throw Error(ErrorCode::internal_error, "grids and cohort are out of step");

    DynamicSampleSet out;
    out.target = target;
    out.variables = grid.variables;
    out.stats = compute_train_stats(grid, split);
    out.vocab = build_static_vocab(cohort);

    out.feature_names = triplet_feature_names(grid.variables, kDynamicInputHours);
    for (const auto& [field, values] : out.vocab.fields)
        for (const auto& value : values) out.feature_names.push_back(field + "=" + value);
    out.feature_names.push_back("time_of_day");

    const std::size_t n_vars = grid.variables.size();
    const std::size_t triplet_width = n_vars * 3 * static_cast<std::size_t>(kDynamicInputHours);
    const std::int64_t horizon = kDynamicInputHours + kDynamicGapHours + kDynamicPredHours;

    std::vector<Triplet> window(static_cast<std::size_t>(kDynamicInputHours));
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const GridStay& gs = grid.stays[i];
        const InterventionGrid::Stay& is = igrid.stays[i];
        const CohortRow& row = cohort[i];
        if (gs.icustay_id != row.icustay_id || is.icustay_id != row.icustay_id)
            throw Error(ErrorCode::internal_error, "grids and cohort are out of step");
        const std::int64_t intime_clock_hour = to_civil(row.intime).hour;
        for (std::int64_t t = 0; t + horizon <= gs.n_hours; ++t) {
            DynamicSample s;
            s.subject_id = row.subject_id;
            s.hadm_id = row.hadm_id;
            s.icustay_id = row.icustay_id;
            s.t = t;
            s.split = split.of(row.subject_id);
            s.features.reserve(out.feature_names.size());
            s.features.resize(triplet_width);
            for (std::size_t v = 0; v < n_vars; ++v) {
                impute_window(gs, static_cast<std::int32_t>(v), t, kDynamicInputHours,
                              out.stats[v], out.sentinel, window.data());
                double* base =
                    s.features.data() + v * 3 * static_cast<std::size_t>(kDynamicInputHours);
                for (std::int64_t k = 0; k < kDynamicInputHours; ++k) {
                    base[k] = window[static_cast<std::size_t>(k)].value;
                    base[kDynamicInputHours + k] = window[static_cast<std::size_t>(k)].mask;
                    base[2 * kDynamicInputHours + k] = window[static_cast<std::size_t>(k)].delta;
                }
            }
            auto one_hot = [&](const std::vector<std::string>& values, const std::string& v) {
                for (const auto& value : values) s.features.push_back(value == v ? 1.0 : 0.0);
            };
            one_hot(out.vocab.fields[0].second, row.gender);
            one_hot(out.vocab.fields[1].second, age_bucket(row.age));
            one_hot(out.vocab.fields[2].second, row.ethnicity);
            one_hot(out.vocab.fields[3].second, row.first_careunit);
            one_hot(out.vocab.fields[4].second, row.admission_type);
            s.features.push_back(static_cast<double>((intime_clock_hour + t) % 24));

            const std::int64_t p0 = t + kDynamicInputHours + kDynamicGapHours;
            bool state_before = is.get(p0 - 1, *target_col);
            std::array<bool, 4> pred{};
            for (std::int64_t k = 0; k < kDynamicPredHours; ++k)
                pred[static_cast<std::size_t>(k)] = is.get(p0 + k, *target_col);
            s.label = label_window(state_before, pred);
            out.samples.push_back(std::move(s));
        }
    }

    // Raw gap lengths are bounded but lopsided; recenter them the same way
    // values are, using train-sample statistics per variable.
    out.delta_stats.assign(n_vars, VarStats{});
    const std::size_t W = static_cast<std::size_t>(kDynamicInputHours);
    for (std::size_t v = 0; v < n_vars; ++v) {
        double sum = 0.0;
        std::int64_t n = 0;
        for (const auto& s : out.samples) {
            if (s.split != Split::train) continue;
            const double* d = s.features.data() + v * 3 * W + 2 * W;
            for (std::size_t k = 0; k < W; ++k) sum += d[k];
            n += static_cast<std::int64_t>(W);
        }
        VarStats& ds = out.delta_stats[v];
        ds.n = n;
        if (n == 0) continue;
        ds.mean = sum / static_cast<double>(n);
        double ssd = 0.0;
        for (const auto& s : out.samples) {
            if (s.split != Split::train) continue;
            const double* d = s.features.data() + v * 3 * W + 2 * W;
            for (std::size_t k = 0; k < W; ++k) ssd += (d[k] - ds.mean) * (d[k] - ds.mean);
        }
        ds.std = n > 1 ? std::max(std::sqrt(ssd / static_cast<double>(n - 1)), 1e-6) : 1e-6;
    }
    for (auto& s : out.samples)
        for (std::size_t v = 0; v < n_vars; ++v) {
            double* d = s.features.data() + v * 3 * W + 2 * W;
            for (std::size_t k = 0; k < W; ++k)
                d[k] = (d[k] - out.delta_stats[v].mean) / out.delta_stats[v].std;
        }

    return out;
}

}  // namespace ehrgrid
