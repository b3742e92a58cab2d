#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ehrgrid/csv.hpp"
#include "ehrgrid/error.hpp"
#include "ehrgrid/time.hpp"

namespace ehrgrid {

struct PatientRow {
    std::int64_t subject_id = 0;
    std::string gender;
    Timestamp dob;
    std::string ethnicity;
    std::string insurance;

    friend bool operator==(const PatientRow&, const PatientRow&) = default;
};

struct AdmissionRow {
    std::int64_t hadm_id = 0;
    std::int64_t subject_id = 0;
    Timestamp admittime;
    Timestamp dischtime;
    std::optional<Timestamp> deathtime;
    std::string admission_type;
    bool hospital_expire_flag = false;

    friend bool operator==(const AdmissionRow&, const AdmissionRow&) = default;
};

struct StayRow {
    std::int64_t icustay_id = 0;
    std::int64_t hadm_id = 0;
    std::int64_t subject_id = 0;
    Timestamp intime;
    Timestamp outtime;
    std::string first_careunit;

    friend bool operator==(const StayRow&, const StayRow&) = default;
};

struct EventRow {
    std::int64_t subject_id = 0;
    std::int64_t hadm_id = 0;
    std::optional<std::int64_t> icustay_id;  // absent for lab events until attached
    std::int64_t itemid = 0;
    Timestamp charttime;
    double valuenum = 0.0;
    std::string valueuom;

    friend bool operator==(const EventRow&, const EventRow&) = default;
};

struct InterventionEventRow {
    std::int64_t icustay_id = 0;
    std::string name;
    Timestamp starttime;
    Timestamp endtime;  // equal to starttime for intermittent events

    friend bool operator==(const InterventionEventRow&, const InterventionEventRow&) = default;
};

struct SourceDataset {
    std::vector<PatientRow> patients;
    std::vector<AdmissionRow> admissions;
    std::vector<StayRow> stays;
    std::vector<EventRow> events;
    std::vector<InterventionEventRow> intervention_events;

    friend bool operator==(const SourceDataset&, const SourceDataset&) = default;
};

namespace detail {

// Header is matched as a set: order-insensitive, but missing or extra
// columns are both schema mismatches, reported by name.
inline std::unordered_map<std::string, std::size_t> check_header(
    const std::string& file, const std::vector<std::string>& header,
    const std::vector<std::string>& expected) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!index.emplace(header[i], i).second)
            throw Error(ErrorCode::schema_mismatch,
                        file + ": duplicate column '" + header[i] + "'");
    }
    for (const auto& col : expected) {
        if (!index.count(col))
            throw Error(ErrorCode::schema_mismatch, file + ": missing column '" + col + "'");
    }
    for (const auto& [name, _] : index) {
        if (std::find(expected.begin(), expected.end(), name) == expected.end())
            throw Error(ErrorCode::schema_mismatch, file + ": unexpected column '" + name + "'");
    }
    return index;
}

class RowView {
public:
    RowView(const std::string& file, const std::unordered_map<std::string, std::size_t>& index,
            const std::vector<std::string>& row, std::int64_t record)
        : file_(file), index_(index), row_(row), record_(record) {}

    [[noreturn]] void fail(const std::string& column, const std::string& what) const {
        throw Error(ErrorCode::parse_error, file_ + " row " + std::to_string(record_) +
                                                " column '" + column + "': " + what);
    }

    const std::string& raw(const std::string& column) const {
        auto it = index_.find(column);
        std::size_t i = it->second;
        if (i >= row_.size()) fail(column, "row has too few fields");
        return row_[i];
    }

    std::int64_t get_int(const std::string& column) const {
        auto v = try_parse_int(raw(column));
        if (!v) fail(column, "not an integer: '" + raw(column) + "'");
        return *v;
    }

    std::optional<std::int64_t> get_opt_int(const std::string& column) const {
        const std::string& s = raw(column);
        if (s.empty()) return std::nullopt;
        return get_int(column);
    }

    double get_double(const std::string& column) const {
        auto v = try_parse_double(raw(column));
        if (!v || !std::isfinite(*v)) fail(column, "not a finite number: '" + raw(column) + "'");
        return *v;
    }

    Timestamp get_time(const std::string& column) const {
        auto v = try_parse_timestamp(raw(column));
        if (!v) fail(column, "not a timestamp: '" + raw(column) + "'");
        return *v;
    }

    std::optional<Timestamp> get_opt_time(const std::string& column) const {
        const std::string& s = raw(column);
        if (s.empty()) return std::nullopt;
        return get_time(column);
    }

    bool get_bool(const std::string& column) const {
        const std::string& s = raw(column);
        if (s == "0" || s == "false" || s == "False") return false;
        if (s == "1" || s == "true" || s == "True") return true;
        fail(column, "not a boolean: '" + s + "'");
    }

private:
    const std::string& file_;
    const std::unordered_map<std::string, std::size_t>& index_;
    const std::vector<std::string>& row_;
    std::int64_t record_;
};

template <typename PerRow>
void read_table(const std::filesystem::path& path, const std::vector<std::string>& columns,
                PerRow&& per_row) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    std::string file = path.filename().string();
    CsvReader reader(in, file);
    std::vector<std::string> row;
    if (!reader.next_row(row))
        throw Error(ErrorCode::schema_mismatch, file + ": empty file, header row required");
    auto index = check_header(file, row, columns);
    while (reader.next_row(row)) {
        if (row.size() != columns.size())
            throw Error(ErrorCode::parse_error,
                        file + " row " + std::to_string(reader.record_number()) + ": expected " +
                            std::to_string(columns.size()) + " fields, got " +
                            std::to_string(row.size()));
        per_row(RowView(file, index, row, reader.record_number()));
    }
}

}  // namespace detail

inline const std::vector<std::string>& patients_columns() {
    static const std::vector<std::string> cols{"subject_id", "gender", "dob", "ethnicity",
                                               "insurance"};
    return cols;
}
inline const std::vector<std::string>& admissions_columns() {
    static const std::vector<std::string> cols{
        "hadm_id", "subject_id",     "admittime", "dischtime",
        "deathtime", "admission_type", "hospital_expire_flag"};
    return cols;
}
inline const std::vector<std::string>& icustays_columns() {
    static const std::vector<std::string> cols{"icustay_id", "hadm_id", "subject_id",
                                               "intime",     "outtime", "first_careunit"};
    return cols;
}
inline const std::vector<std::string>& events_columns() {
    static const std::vector<std::string> cols{"subject_id", "hadm_id",  "icustay_id", "itemid",
                                               "charttime",  "valuenum", "valueuom"};
    return cols;
}
inline const std::vector<std::string>& intervention_events_columns() {
    static const std::vector<std::string> cols{"icustay_id", "name", "starttime", "endtime"};
    return cols;
}

// Parses and validates the five source tables. Referential integrity is
// enforced after parsing: dangling keys are fatal, not skipped.
inline SourceDataset load_source_dataset(const std::filesystem::path& dir) {
    SourceDataset ds;

    detail::read_table(dir / "patients.csv", patients_columns(), [&](const detail::RowView& r) {
        PatientRow p;
        p.subject_id = r.get_int("subject_id");
        p.gender = r.raw("gender");
        p.dob = r.get_time("dob");
        p.ethnicity = r.raw("ethnicity");
        p.insurance = r.raw("insurance");
        ds.patients.push_back(std::move(p));
    });

    detail::read_table(dir / "admissions.csv", admissions_columns(), [&](const detail::RowView& r) {
        AdmissionRow a;
        a.hadm_id = r.get_int("hadm_id");
        a.subject_id = r.get_int("subject_id");
        a.admittime = r.get_time("admittime");
        a.dischtime = r.get_time("dischtime");
        a.deathtime = r.get_opt_time("deathtime");
        a.admission_type = r.raw("admission_type");
        a.hospital_expire_flag = r.get_bool("hospital_expire_flag");
        if (a.dischtime < a.admittime) r.fail("dischtime", "dischtime before admittime");
        if (a.deathtime && *a.deathtime < a.admittime) r.fail("deathtime", "deathtime before admittime");
        ds.admissions.push_back(std::move(a));
    });

    detail::read_table(dir / "icustays.csv", icustays_columns(), [&](const detail::RowView& r) {
        StayRow s;
        s.icustay_id = r.get_int("icustay_id");
        s.hadm_id = r.get_int("hadm_id");
        s.subject_id = r.get_int("subject_id");
        s.intime = r.get_time("intime");
        s.outtime = r.get_time("outtime");
        s.first_careunit = r.raw("first_careunit");
        if (!(s.intime < s.outtime)) r.fail("outtime", "outtime not after intime");
        ds.stays.push_back(std::move(s));
    });

    detail::read_table(dir / "events.csv", events_columns(), [&](const detail::RowView& r) {
        EventRow e;
        e.subject_id = r.get_int("subject_id");
        e.hadm_id = r.get_int("hadm_id");
        e.icustay_id = r.get_opt_int("icustay_id");
        e.itemid = r.get_int("itemid");
        e.charttime = r.get_time("charttime");
        e.valuenum = r.get_double("valuenum");
        e.valueuom = r.raw("valueuom");
        ds.events.push_back(std::move(e));
    });

    detail::read_table(dir / "intervention_events.csv", intervention_events_columns(),
                       [&](const detail::RowView& r) {
                           InterventionEventRow ev;
                           ev.icustay_id = r.get_int("icustay_id");
                           ev.name = r.raw("name");
                           ev.starttime = r.get_time("starttime");
                           ev.endtime = r.get_time("endtime");
                           if (ev.endtime < ev.starttime) r.fail("endtime", "endtime before starttime");
                           ds.intervention_events.push_back(std::move(ev));
                       });

    // Key uniqueness.
    {
        std::unordered_set<std::int64_t> seen;
        for (const auto& p : ds.patients)
            if (!seen.insert(p.subject_id).second)
                throw Error(ErrorCode::integrity_error,
                            "patients.csv: duplicate subject_id " + std::to_string(p.subject_id));
    }
    {
        std::unordered_set<std::int64_t> seen;
        for (const auto& a : ds.admissions)
            if (!seen.insert(a.hadm_id).second)
                throw Error(ErrorCode::integrity_error,
                            "admissions.csv: duplicate hadm_id " + std::to_string(a.hadm_id));
    }
    {
        std::unordered_set<std::int64_t> seen;
        for (const auto& s : ds.stays)
            if (!seen.insert(s.icustay_id).second)
                throw Error(ErrorCode::integrity_error,
                            "icustays.csv: duplicate icustay_id " + std::to_string(s.icustay_id));
    }

    // Foreign keys.
    std::unordered_set<std::int64_t> subject_ids, hadm_ids, stay_ids;
    for (const auto& p : ds.patients) subject_ids.insert(p.subject_id);
    for (const auto& a : ds.admissions) hadm_ids.insert(a.hadm_id);
    for (const auto& s : ds.stays) stay_ids.insert(s.icustay_id);

    for (const auto& a : ds.admissions)
        if (!subject_ids.count(a.subject_id))
            throw Error(ErrorCode::integrity_error, "admissions.csv: hadm_id " +
                                                        std::to_string(a.hadm_id) +
                                                        " references unknown subject_id " +
                                                        std::to_string(a.subject_id));
    for (const auto& s : ds.stays) {
        if (!hadm_ids.count(s.hadm_id))
            throw Error(ErrorCode::integrity_error,
                        "icustays.csv: icustay_id " + std::to_string(s.icustay_id) +
                            " references unknown hadm_id " + std::to_string(s.hadm_id));
        if (!subject_ids.count(s.subject_id))
            throw Error(ErrorCode::integrity_error,
                        "icustays.csv: icustay_id " + std::to_string(s.icustay_id) +
                            " references unknown subject_id " + std::to_string(s.subject_id));
    }
    for (const auto& e : ds.events)
        if (e.icustay_id && !stay_ids.count(*e.icustay_id))
            throw Error(ErrorCode::integrity_error,
                        "events.csv: event references unknown icustay_id " +
                            std::to_string(*e.icustay_id));
    for (const auto& ev : ds.intervention_events)
        if (!stay_ids.count(ev.icustay_id))
            throw Error(ErrorCode::integrity_error,
                        "intervention_events.csv: event references unknown icustay_id " +
                            std::to_string(ev.icustay_id));

    return ds;
}

struct AttachResult {
    std::vector<EventRow> events;   // all events, lab events now carrying a stay id
    std::int64_t n_attached = 0;
    std::int64_t n_dropped = 0;     // lab events matching no containing stay
};

// Lab events arrive without a stay id. Each one is assigned to the stay of
// the same hospital admission whose [intime, outtime] contains charttime
// (closed on both ends, so admission-boundary labs are kept). Events that
// match no stay are dropped, not failed. When overlapping stays both
// contain the time, the earlier stay wins (ties by smaller icustay_id).
inline AttachResult attach_stay_to_lab_events(std::vector<EventRow> events,
                                              const std::vector<StayRow>& stays) {
    std::unordered_map<std::int64_t, std::vector<const StayRow*>> by_hadm;
    for (const auto& s : stays) by_hadm[s.hadm_id].push_back(&s);
    for (auto& [_, v] : by_hadm)
        std::sort(v.begin(), v.end(), [](const StayRow* a, const StayRow* b) {
            if (a->intime != b->intime) return a->intime < b->intime;
            return a->icustay_id < b->icustay_id;
        });

    AttachResult out;
    out.events.reserve(events.size());
    for (auto& e : events) {
        if (e.icustay_id) {
            out.events.push_back(std::move(e));
            continue;
        }
        const StayRow* match = nullptr;
        auto it = by_hadm.find(e.hadm_id);
        if (it != by_hadm.end()) {
            for (const StayRow* s : it->second) {
                if (s->intime <= e.charttime && e.charttime <= s->outtime) {
                    match = s;
                    break;
                }
            }
        }
        if (match) {
            e.icustay_id = match->icustay_id;
            out.events.push_back(std::move(e));
            ++out.n_attached;
        } else {
            ++out.n_dropped;
        }
    }
    return out;
}

// --- Writers (synthetic generation and round-trip tests share these) ---

inline std::string format_opt_time(const std::optional<Timestamp>& t) {
    return t ? format_timestamp(*t) : std::string();
}

inline void save_source_dataset(const SourceDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "patients.csv", std::ios::binary);
        write_csv_row(out, patients_columns());
        for (const auto& p : ds.patients)
            write_csv_row(out, {std::to_string(p.subject_id), p.gender, format_timestamp(p.dob),
                                p.ethnicity, p.insurance});
    }
    {
        std::ofstream out(dir / "admissions.csv", std::ios::binary);
        write_csv_row(out, admissions_columns());
        for (const auto& a : ds.admissions)
            write_csv_row(out, {std::to_string(a.hadm_id), std::to_string(a.subject_id),
                                format_timestamp(a.admittime), format_timestamp(a.dischtime),
                                format_opt_time(a.deathtime), a.admission_type,
                                a.hospital_expire_flag ? "1" : "0"});
    }
    {
        std::ofstream out(dir / "icustays.csv", std::ios::binary);
        write_csv_row(out, icustays_columns());
        for (const auto& s : ds.stays)
            write_csv_row(out, {std::to_string(s.icustay_id), std::to_string(s.hadm_id),
                                std::to_string(s.subject_id), format_timestamp(s.intime),
                                format_timestamp(s.outtime), s.first_careunit});
    }
    {
        std::ofstream out(dir / "events.csv", std::ios::binary);
        write_csv_row(out, events_columns());
        for (const auto& e : ds.events)
            write_csv_row(out, {std::to_string(e.subject_id), std::to_string(e.hadm_id),
                                e.icustay_id ? std::to_string(*e.icustay_id) : std::string(),
                                std::to_string(e.itemid), format_timestamp(e.charttime),
                                format_double(e.valuenum), e.valueuom});
    }
    {
        std::ofstream out(dir / "intervention_events.csv", std::ios::binary);
        write_csv_row(out, intervention_events_columns());
        for (const auto& ev : ds.intervention_events)
            write_csv_row(out, {std::to_string(ev.icustay_id), ev.name,
                                format_timestamp(ev.starttime), format_timestamp(ev.endtime)});
    }
}

}  // namespace ehrgrid
