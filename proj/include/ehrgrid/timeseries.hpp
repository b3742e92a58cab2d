#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrgrid/cohort.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/parallel.hpp"
#include "ehrgrid/resources.hpp"
#include "ehrgrid/time.hpp"

namespace ehrgrid {

// Unit strings are matched case-insensitively and by name only; guessing
// the unit from the magnitude of the value is not reproducible, so we
// refuse to do it. An empty uom means the value is already canonical.
// Returns nothing when the uom is not recognized for the class; the caller
// counts the event as a unit error and moves on.
inline std::optional<double> convert_units(double valuenum, const std::string& valueuom,
                                           UnitClass unit_class) {
    if (unit_class == UnitClass::none) return valuenum;
    std::string u;
    u.reserve(valueuom.size());
    for (unsigned char c : valueuom) u.push_back(static_cast<char>(std::tolower(c)));
    if (u.empty()) return valuenum;
    switch (unit_class) {
        case UnitClass::weight:
            if (u == "kg") return valuenum;
            if (u == "lb" || u == "lbs") return valuenum * 0.45359237;
            if (u == "oz") return valuenum * 0.0283495231;
            return std::nullopt;
        case UnitClass::height:
            if (u == "cm") return valuenum;
            if (u == "in") return valuenum * 2.54;
            return std::nullopt;
        case UnitClass::temperature:
            if (u == "c" || u == "\xc2\xb0""c") return valuenum;
            if (u == "f" || u == "\xc2\xb0""f") return (valuenum - 32.0) * 5.0 / 9.0;
            return std::nullopt;
        case UnitClass::none:
            break;
    }
    return valuenum;
}

enum class OutlierAction { keep, clamp_low, clamp_high, drop };

struct OutlierDecision {
    OutlierAction action = OutlierAction::keep;
    double value = 0.0;  // meaningless for drop
};

// Two tiers: beyond the outlier bounds a value is discarded as
// physiologically impossible; between outlier and valid bounds it is
// pulled to the nearest valid bound; inside the valid range it passes
// untouched. Re-applying the policy to a clamped value always yields keep.
inline OutlierDecision apply_outlier_policy(double value, const VariableRange* range) {
    if (!range || !range->has_bounds) return {OutlierAction::keep, value};
    if (value < range->outlier_low || value > range->outlier_high) return {OutlierAction::drop, 0.0};
    if (value < range->valid_low) return {OutlierAction::clamp_low, range->valid_low};
    if (value > range->valid_high) return {OutlierAction::clamp_high, range->valid_high};
    return {OutlierAction::keep, value};
}

// Hour slot of an event relative to its stay, or nothing when the event
// falls before intime or past the last grid hour. Events in the trailing
// partial hour land in slot n_hours-1 by the floor itself.
inline std::optional<std::int64_t> bucket_hour(Timestamp charttime, Timestamp intime,
                                               std::int64_t n_hours) {
    std::int64_t h = floor_div(charttime.sec - intime.sec, kSecondsPerHour);
    if (h < 0 || h >= n_hours) return std::nullopt;
    return h;
}

struct HourlyCell {
    double mean = 0.0;
    std::int64_t count = 0;
    std::optional<double> std;  // absent for singleton cells
};

struct CellEntry {
    std::int32_t hour = 0;
    std::int32_t var = 0;  // index into HourlyGrid::variables
    HourlyCell cell;
};

struct GridStay {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t icustay_id = 0;
    std::int64_t n_hours = 0;
    std::vector<CellEntry> cells;  // sorted by (hour, var)

    const HourlyCell* find(std::int32_t hour, std::int32_t var) const {
        auto it = std::lower_bound(cells.begin(), cells.end(), std::pair{hour, var},
                                   [](const CellEntry& e, const std::pair<std::int32_t, std::int32_t>& k) {
                                       return std::pair{e.hour, e.var} < k;
                                   });
        if (it != cells.end() && it->hour == hour && it->var == var) return &it->cell;
        return nullptr;
    }
};

struct HourlyGrid {
    std::vector<std::string> variables;  // lexicographically sorted
    std::vector<GridStay> stays;         // cohort order (by subject_id)

    std::int64_t total_rows() const {
        std::int64_t n = 0;
        for (const auto& s : stays) n += s.n_hours;
        return n;
    }
};

struct VariableOutlierCounts {
    std::int64_t n_kept = 0;
    std::int64_t n_clamped_low = 0;
    std::int64_t n_clamped_high = 0;
    std::int64_t n_dropped = 0;
};

struct OutlierReport {
    std::map<std::string, VariableOutlierCounts> per_variable;
    std::int64_t n_unmapped = 0;      // itemid not in the map
    std::int64_t n_unit_errors = 0;   // uom not recognized for the class
    std::int64_t n_out_of_stay = 0;   // outside any cohort stay's grid

    std::int64_t n_kept() const { return sum(&VariableOutlierCounts::n_kept); }
    std::int64_t n_clamped_low() const { return sum(&VariableOutlierCounts::n_clamped_low); }
    std::int64_t n_clamped_high() const { return sum(&VariableOutlierCounts::n_clamped_high); }
    std::int64_t n_dropped() const { return sum(&VariableOutlierCounts::n_dropped); }

    // Every event lands in exactly one bin, so these add up to the number
    // of events handed to aggregate_hourly.
    std::int64_t total() const {
        return n_kept() + n_clamped_low() + n_clamped_high() + n_dropped() + n_unmapped +
               n_unit_errors + n_out_of_stay;
    }

private:
    std::int64_t sum(std::int64_t VariableOutlierCounts::* field) const {
        std::int64_t n = 0;
        for (const auto& [_, c] : per_variable) n += c.*field;
        return n;
    }
};

namespace detail {

// The variable universe is fixed up front from the item map (clinical
// aggregates, or decimal itemids in raw mode) so worker threads can index
// by integer; the grid is later narrowed to variables that materialized.
struct VariableUniverse {
    std::vector<std::string> keys;  // sorted lexicographically
    std::unordered_map<std::int64_t, std::int32_t> itemid_to_key;   // resolved index
    std::unordered_map<std::int64_t, const VariableRange*> itemid_range;

    static VariableUniverse build(const ItemMap& items, const RangeTable& ranges,
                                  bool group_by_level2) {
        VariableUniverse u;
        std::map<std::string, std::vector<std::int64_t>> key_items;
        for (const auto& [itemid, entry] : items.by_itemid) {
            std::string key =
                group_by_level2 ? entry.aggregate_group : std::to_string(itemid);
            key_items[key].push_back(itemid);
        }
        u.keys.reserve(key_items.size());
        for (auto& [key, ids] : key_items) {
            std::int32_t idx = static_cast<std::int32_t>(u.keys.size());
            u.keys.push_back(key);
            for (std::int64_t id : ids) u.itemid_to_key.emplace(id, idx);
        }
        // Plausibility bounds are defined per clinical aggregate; raw-mode
        // itemids inherit the bounds of their group.
        for (const auto& [itemid, entry] : items.by_itemid)
            u.itemid_range.emplace(itemid, ranges.find(entry.aggregate_group));
        return u;
    }
};

struct SurvivingValue {
    std::int32_t hour;
    std::int32_t var;
    double value;
};

}  // namespace detail

// Per-event pipeline: resolve the variable, convert units, apply the
// outlier policy, bucket by hour; survivors are pooled per (stay, hour,
// variable) into mean/count/sample-std cells. Anomalies are counted, never
// fatal. Within a stay events are reduced in (charttime, itemid, valuenum)
// order, so sums — and therefore the grid — are identical no matter how
// many threads run.
inline std::pair<HourlyGrid, OutlierReport> aggregate_hourly(const std::vector<EventRow>& events,
                                                             const std::vector<CohortRow>& cohort,
                                                             const ItemMap& items,
                                                             const RangeTable& ranges,
                                                             const ExtractConfig& cfg,
                                                             int threads = 1) {
    auto universe = detail::VariableUniverse::build(items, ranges, cfg.group_by_level2);
    const std::size_t n_vars = universe.keys.size();

    std::unordered_map<std::int64_t, std::size_t> stay_index;
    for (std::size_t i = 0; i < cohort.size(); ++i) stay_index.emplace(cohort[i].icustay_id, i);

    std::vector<std::vector<const EventRow*>> stay_events(cohort.size());
    std::vector<VariableOutlierCounts> counts(n_vars);
    OutlierReport report;

    for (const auto& e : events) {
        auto it = e.icustay_id ? stay_index.find(*e.icustay_id) : stay_index.end();
        if (it != stay_index.end()) {
            stay_events[it->second].push_back(&e);
            continue;
        }
        // Events outside every cohort stay still pass through the early
        // pipeline stages so the accounting identity covers the whole run.
        auto key = universe.itemid_to_key.find(e.itemid);
        if (key == universe.itemid_to_key.end()) {
            ++report.n_unmapped;
            continue;
        }
        auto converted =
            convert_units(e.valuenum, e.valueuom, items.find(e.itemid)->unit_class);
        if (!converted) {
            ++report.n_unit_errors;
            continue;
        }
        auto decision = apply_outlier_policy(*converted, universe.itemid_range.at(e.itemid));
        if (decision.action == OutlierAction::drop)
            ++counts[key->second].n_dropped;
        else
            ++report.n_out_of_stay;
    }

    struct StayOut {
        std::vector<CellEntry> cells;
        std::vector<VariableOutlierCounts> counts;
        std::int64_t n_unmapped = 0;
        std::int64_t n_unit_errors = 0;
        std::int64_t n_out_of_stay = 0;
    };
    std::vector<StayOut> outs(cohort.size());

    parallel_for(cohort.size(), threads, [&](std::size_t i) {
        const CohortRow& stay = cohort[i];
        StayOut& out = outs[i];
        out.counts.resize(n_vars);
        auto evs = stay_events[i];
        std::sort(evs.begin(), evs.end(), [](const EventRow* a, const EventRow* b) {
            if (a->charttime != b->charttime) return a->charttime < b->charttime;
            if (a->itemid != b->itemid) return a->itemid < b->itemid;
            return a->valuenum < b->valuenum;
        });

        std::vector<detail::SurvivingValue> vals;
        vals.reserve(evs.size());
        const std::int64_t n_hours = stay.n_hours();
        for (const EventRow* e : evs) {
            auto key = universe.itemid_to_key.find(e->itemid);
            if (key == universe.itemid_to_key.end()) {
                ++out.n_unmapped;
                continue;
            }
            auto converted =
                convert_units(e->valuenum, e->valueuom, items.find(e->itemid)->unit_class);
            if (!converted) {
                ++out.n_unit_errors;
                continue;
            }
            auto decision = apply_outlier_policy(*converted, universe.itemid_range.at(e->itemid));
            if (decision.action == OutlierAction::drop) {
                ++out.counts[key->second].n_dropped;
                continue;
            }
            auto hour = bucket_hour(e->charttime, stay.intime, n_hours);
            if (!hour) {
                ++out.n_out_of_stay;
                continue;
            }
            switch (decision.action) {
                case OutlierAction::keep: ++out.counts[key->second].n_kept; break;
                case OutlierAction::clamp_low: ++out.counts[key->second].n_clamped_low; break;
                case OutlierAction::clamp_high: ++out.counts[key->second].n_clamped_high; break;
                case OutlierAction::drop: break;
            }
            vals.push_back({static_cast<std::int32_t>(*hour), key->second, decision.value});
        }

        // stable: within a cell the (charttime, itemid, valuenum) order is
        // preserved, pinning the floating-point summation order.
        std::stable_sort(vals.begin(), vals.end(),
                         [](const detail::SurvivingValue& a, const detail::SurvivingValue& b) {
                             if (a.hour != b.hour) return a.hour < b.hour;
                             return a.var < b.var;
                         });
        for (std::size_t b = 0; b < vals.size();) {
            std::size_t e = b;
            while (e < vals.size() && vals[e].hour == vals[b].hour && vals[e].var == vals[b].var)
                ++e;
            const auto n = static_cast<std::int64_t>(e - b);
            double sum = 0.0;
            for (std::size_t k = b; k < e; ++k) sum += vals[k].value;
            HourlyCell cell;
            cell.count = n;
            cell.mean = sum / static_cast<double>(n);
            if (n > 1) {
                double ssd = 0.0;
                for (std::size_t k = b; k < e; ++k) {
                    double d = vals[k].value - cell.mean;
                    ssd += d * d;
                }
                cell.std = std::sqrt(ssd / static_cast<double>(n - 1));
            }
            out.cells.push_back({vals[b].hour, vals[b].var, cell});
            b = e;
        }
    });

    // Narrow the universe to variables that actually materialized a cell.
    std::vector<bool> present(n_vars, false);
    for (const auto& out : outs)
        for (const auto& c : out.cells) present[static_cast<std::size_t>(c.var)] = true;
    std::vector<std::int32_t> remap(n_vars, -1);
    HourlyGrid grid;
    for (std::size_t v = 0; v < n_vars; ++v) {
        if (present[v]) {
            remap[v] = static_cast<std::int32_t>(grid.variables.size());
            grid.variables.push_back(universe.keys[v]);
        }
    }

    grid.stays.reserve(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const CohortRow& stay = cohort[i];
        StayOut& out = outs[i];
        GridStay gs;
        gs.subject_id = stay.subject_id;
        gs.hadm_id = stay.hadm_id;
        gs.icustay_id = stay.icustay_id;
        gs.n_hours = stay.n_hours();
        gs.cells = std::move(out.cells);
        for (auto& c : gs.cells) c.var = remap[static_cast<std::size_t>(c.var)];
        grid.stays.push_back(std::move(gs));
        for (std::size_t v = 0; v < n_vars; ++v) {
            const auto& c = out.counts[v];
            if (c.n_kept | c.n_clamped_low | c.n_clamped_high | c.n_dropped) {
                auto& dst = counts[v];
                dst.n_kept += c.n_kept;
                dst.n_clamped_low += c.n_clamped_low;
                dst.n_clamped_high += c.n_clamped_high;
                dst.n_dropped += c.n_dropped;
            }
        }
        report.n_unmapped += out.n_unmapped;
        report.n_unit_errors += out.n_unit_errors;
        report.n_out_of_stay += out.n_out_of_stay;
    }

    for (std::size_t v = 0; v < n_vars; ++v) {
        const auto& c = counts[v];
        if (c.n_kept | c.n_clamped_low | c.n_clamped_high | c.n_dropped)
            report.per_variable.emplace(universe.keys[v], c);
    }
    return {std::move(grid), std::move(report)};
}

struct MissingnessRow {
    std::string variable;
    double presence_percent = 0.0;   // share of (stay, hour) rows with a cell
    std::int64_t n_present = 0;
    double mean = 0.0;               // over observed cell means
    std::optional<double> std;       // sample std; absent below 2 observations
};

inline std::vector<MissingnessRow> summarize_missingness(const HourlyGrid& grid) {
    const std::size_t n_vars = grid.variables.size();
    std::vector<std::int64_t> present(n_vars, 0);
    std::vector<double> sum(n_vars, 0.0);
    for (const auto& s : grid.stays) {
        for (const auto& c : s.cells) {
            ++present[static_cast<std::size_t>(c.var)];
            sum[static_cast<std::size_t>(c.var)] += c.cell.mean;
        }
    }
    std::vector<double> ssd(n_vars, 0.0);
    for (const auto& s : grid.stays)
        for (const auto& c : s.cells) {
            std::size_t v = static_cast<std::size_t>(c.var);
            double d = c.cell.mean - sum[v] / static_cast<double>(present[v]);
            ssd[v] += d * d;
        }
    const double rows = static_cast<double>(grid.total_rows());
    std::vector<MissingnessRow> out;
    out.reserve(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
        MissingnessRow r;
        r.variable = grid.variables[v];
        r.n_present = present[v];
        r.presence_percent = rows > 0 ? 100.0 * static_cast<double>(present[v]) / rows : 0.0;
        if (present[v] > 0) r.mean = sum[v] / static_cast<double>(present[v]);
        if (present[v] > 1) r.std = std::sqrt(ssd[v] / static_cast<double>(present[v] - 1));
        out.push_back(std::move(r));
    }
    return out;
}

struct MissingnessFilterResult {
    HourlyGrid grid;
    std::vector<std::string> dropped;  // variables below the threshold
};

// Keeps variables observed in at least min_percent of (stay, hour) rows;
// the comparison is >=, so a variable sitting exactly at the threshold
// survives, and min_percent = 0 is the identity.
inline MissingnessFilterResult filter_missingness(HourlyGrid grid, double min_percent) {
    auto summary = summarize_missingness(grid);
    const std::size_t n_vars = grid.variables.size();
    std::vector<std::int32_t> remap(n_vars, -1);
    MissingnessFilterResult out;
    for (std::size_t v = 0; v < n_vars; ++v) {
        if (summary[v].presence_percent >= min_percent) {
            remap[v] = static_cast<std::int32_t>(out.grid.variables.size());
            out.grid.variables.push_back(grid.variables[v]);
        } else {
            out.dropped.push_back(grid.variables[v]);
        }
    }
    out.grid.stays.reserve(grid.stays.size());
    for (auto& s : grid.stays) {
        GridStay gs;
        gs.subject_id = s.subject_id;
        gs.hadm_id = s.hadm_id;
        gs.icustay_id = s.icustay_id;
        gs.n_hours = s.n_hours;
        gs.cells.reserve(s.cells.size());
        for (auto& c : s.cells) {
            std::int32_t nv = remap[static_cast<std::size_t>(c.var)];
            if (nv >= 0) gs.cells.push_back({c.hour, nv, c.cell});
        }
        out.grid.stays.push_back(std::move(gs));
    }
    return out;
}

}  // namespace ehrgrid
