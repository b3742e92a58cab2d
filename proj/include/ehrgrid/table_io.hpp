#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ehrgrid/benchprep.hpp"
#include "ehrgrid/cohort.hpp"
#include "ehrgrid/csv.hpp"
#include "ehrgrid/error.hpp"
#include "ehrgrid/interventions.hpp"
#include "ehrgrid/time.hpp"
#include "ehrgrid/timeseries.hpp"

namespace ehrgrid {

// FNV-1a over raw file bytes; the manifest uses it to pin inputs and
// outputs without dragging in a crypto dependency.
inline std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

inline std::uint64_t fnv1a64_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

namespace tabledetail {

inline std::ifstream open_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    return in;
}

[[noreturn]] inline void bad_cell(const std::filesystem::path& path, std::int64_t record,
                                  const std::string& what) {
    throw Error(ErrorCode::parse_error,
                path.filename().string() + " row " + std::to_string(record) + ": " + what);
}

inline std::int64_t cell_int(const std::filesystem::path& path, std::int64_t record,
                             const std::string& s) {
    auto v = try_parse_int(s);
    if (!v) bad_cell(path, record, "not an integer: '" + s + "'");
    return *v;
}

inline double cell_double(const std::filesystem::path& path, std::int64_t record,
                          const std::string& s) {
    auto v = try_parse_double(s);
    if (!v) bad_cell(path, record, "not a number: '" + s + "'");
    return *v;
}

inline Timestamp cell_time(const std::filesystem::path& path, std::int64_t record,
                           const std::string& s) {
    auto v = try_parse_timestamp(s);
    if (!v) bad_cell(path, record, "not a timestamp: '" + s + "'");
    return *v;
}

inline bool cell_bool(const std::filesystem::path& path, std::int64_t record,
                      const std::string& s) {
    if (s == "0") return false;
    if (s == "1") return true;
    bad_cell(path, record, "not a 0/1 flag: '" + s + "'");
}

}  // namespace tabledetail

// --- cohort table ---

inline const std::vector<std::string>& cohort_columns() {
    static const std::vector<std::string> cols{
        "subject_id", "hadm_id",    "icustay_id",     "age",      "gender",
        "ethnicity",  "insurance",  "admission_type", "first_careunit",
        "admittime",  "dischtime",  "intime",         "outtime",  "mort_icu",
        "mort_hosp",  "los_icu_hours"};
    return cols;
}

inline void write_cohort_table(const std::vector<CohortRow>& cohort,
                               const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    write_csv_row(out, cohort_columns());
    for (const auto& r : cohort)
        write_csv_row(out, {std::to_string(r.subject_id), std::to_string(r.hadm_id),
                            std::to_string(r.icustay_id), std::to_string(r.age), r.gender,
                            r.ethnicity, r.insurance, r.admission_type, r.first_careunit,
                            format_timestamp(r.admittime), format_timestamp(r.dischtime),
                            format_timestamp(r.intime), format_timestamp(r.outtime),
                            r.mort_icu ? "1" : "0", r.mort_hosp ? "1" : "0",
                            format_double(r.los_icu_hours)});
}

inline std::vector<CohortRow> read_cohort_table(const std::filesystem::path& path) {
    auto in = tabledetail::open_table(path);
    CsvReader reader(in, path.filename().string());
    std::vector<std::string> row;
    if (!reader.next_row(row) || row != cohort_columns())
        throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": unexpected header");
    std::vector<CohortRow> cohort;
    std::int64_t record = 1;
    while (reader.next_row(row)) {
        ++record;
        if (row.size() != cohort_columns().size())
            tabledetail::bad_cell(path, record, "wrong field count");
        CohortRow r;
        r.subject_id = tabledetail::cell_int(path, record, row[0]);
        r.hadm_id = tabledetail::cell_int(path, record, row[1]);
        r.icustay_id = tabledetail::cell_int(path, record, row[2]);
        r.age = tabledetail::cell_int(path, record, row[3]);
        r.gender = row[4];
        r.ethnicity = row[5];
        r.insurance = row[6];
        r.admission_type = row[7];
        r.first_careunit = row[8];
        r.admittime = tabledetail::cell_time(path, record, row[9]);
        r.dischtime = tabledetail::cell_time(path, record, row[10]);
        r.intime = tabledetail::cell_time(path, record, row[11]);
        r.outtime = tabledetail::cell_time(path, record, row[12]);
        r.mort_icu = tabledetail::cell_bool(path, record, row[13]);
        r.mort_hosp = tabledetail::cell_bool(path, record, row[14]);
        r.los_icu_hours = tabledetail::cell_double(path, record, row[15]);
        cohort.push_back(std::move(r));
    }
    return cohort;
}

// --- hourly grid tables ---

// One row per stay-hour, dense over the grid: hours with no data keep the
// stay visible and make row counts predictable. Per variable, three
// columns; the mean-only flavor drops count/std.
inline void write_grid_table(const HourlyGrid& grid, const std::filesystem::path& path,
                             bool mean_only) {
    std::ofstream out(path, std::ios::binary);
    std::vector<std::string> header{"subject_id", "hadm_id", "icustay_id", "hours_in"};
    for (const auto& v : grid.variables) {
        header.push_back(v + "_mean");
        if (!mean_only) {
            header.push_back(v + "_count");
            header.push_back(v + "_std");
        }
    }
    write_csv_row(out, header);
    const std::size_t n_vars = grid.variables.size();
    std::vector<std::string> row;
    for (const auto& stay : grid.stays) {
        std::size_t next = 0;  // cells are (hour, var)-sorted; walk once
        for (std::int64_t h = 0; h < stay.n_hours; ++h) {
            row.assign({std::to_string(stay.subject_id), std::to_string(stay.hadm_id),
                        std::to_string(stay.icustay_id), std::to_string(h)});
            row.resize(4 + n_vars * (mean_only ? 1 : 3));
            while (next < stay.cells.size() && stay.cells[next].hour == h) {
                const CellEntry& e = stay.cells[next++];
                const std::size_t base = 4 + static_cast<std::size_t>(e.var) * (mean_only ? 1 : 3);
                row[base] = format_double(e.cell.mean);
                if (!mean_only) {
                    row[base + 1] = std::to_string(e.cell.count);
                    if (e.cell.std) row[base + 2] = format_double(*e.cell.std);
                }
            }
            write_csv_row(out, row);
        }
    }
}

inline HourlyGrid read_grid_table(const std::filesystem::path& path) {
    auto in = tabledetail::open_table(path);
    CsvReader reader(in, path.filename().string());
    std::vector<std::string> row;
    if (!reader.next_row(row))
        throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": empty file");
    const std::vector<std::string> index{"subject_id", "hadm_id", "icustay_id", "hours_in"};
    if (row.size() < index.size() ||
        !std::equal(index.begin(), index.end(), row.begin()) ||
        (row.size() - index.size()) % 3 != 0)
        throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": unexpected header");
    HourlyGrid grid;
    for (std::size_t i = index.size(); i < row.size(); i += 3) {
        if (row[i].size() < 5 || row[i].substr(row[i].size() - 5) != "_mean" ||
            row[i + 1] != row[i].substr(0, row[i].size() - 5) + "_count" ||
            row[i + 2] != row[i].substr(0, row[i].size() - 5) + "_std")
            throw Error(ErrorCode::schema_mismatch,
                        path.filename().string() + ": unexpected column '" + row[i] + "'");
        grid.variables.push_back(row[i].substr(0, row[i].size() - 5));
    }
    const std::size_t n_vars = grid.variables.size();
    std::int64_t record = 1;
    while (reader.next_row(row)) {
        ++record;
        if (row.size() != 4 + n_vars * 3)
            tabledetail::bad_cell(path, record, "wrong field count");
        const std::int64_t icustay_id = tabledetail::cell_int(path, record, row[2]);
        if (grid.stays.empty() || grid.stays.back().icustay_id != icustay_id) {
            GridStay s;
            s.subject_id = tabledetail::cell_int(path, record, row[0]);
            s.hadm_id = tabledetail::cell_int(path, record, row[1]);
            s.icustay_id = icustay_id;
            grid.stays.push_back(std::move(s));
        }
        GridStay& stay = grid.stays.back();
        const std::int64_t hour = tabledetail::cell_int(path, record, row[3]);
        if (hour != stay.n_hours)
            tabledetail::bad_cell(path, record, "hours_in not dense for stay");
        ++stay.n_hours;
        for (std::size_t v = 0; v < n_vars; ++v) {
            const std::string& mean = row[4 + v * 3];
            if (mean.empty()) continue;
            CellEntry e;
            e.hour = static_cast<std::int32_t>(hour);
            e.var = static_cast<std::int32_t>(v);
            e.cell.mean = tabledetail::cell_double(path, record, mean);
            e.cell.count = tabledetail::cell_int(path, record, row[4 + v * 3 + 1]);
            if (!row[4 + v * 3 + 2].empty())
                e.cell.std = tabledetail::cell_double(path, record, row[4 + v * 3 + 2]);
            stay.cells.push_back(std::move(e));
        }
    }
    return grid;
}

// --- intervention table ---

inline void write_intervention_table(const InterventionGrid& grid,
                                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    std::vector<std::string> header{"subject_id", "hadm_id", "icustay_id", "hours_in"};
    for (const char* c : kInterventionColumns) header.emplace_back(c);
    write_csv_row(out, header);
    std::vector<std::string> row;
    for (const auto& stay : grid.stays) {
        for (std::int64_t h = 0; h < stay.n_hours; ++h) {
            row.assign({std::to_string(stay.subject_id), std::to_string(stay.hadm_id),
                        std::to_string(stay.icustay_id), std::to_string(h)});
            for (std::size_t c = 0; c < kInterventionColumns.size(); ++c)
                row.push_back(stay.get(h, c) ? "1" : "0");
            write_csv_row(out, row);
        }
    }
}

inline InterventionGrid read_intervention_table(const std::filesystem::path& path) {
    auto in = tabledetail::open_table(path);
    CsvReader reader(in, path.filename().string());
    std::vector<std::string> row;
    std::vector<std::string> expected{"subject_id", "hadm_id", "icustay_id", "hours_in"};
    for (const char* c : kInterventionColumns) expected.emplace_back(c);
    if (!reader.next_row(row) || row != expected)
        throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": unexpected header");
    InterventionGrid grid;
    std::int64_t record = 1;
    while (reader.next_row(row)) {
        ++record;
        if (row.size() != expected.size())
            tabledetail::bad_cell(path, record, "wrong field count");
        const std::int64_t icustay_id = tabledetail::cell_int(path, record, row[2]);
        if (grid.stays.empty() || grid.stays.back().icustay_id != icustay_id) {
            InterventionGrid::Stay s;
            s.subject_id = tabledetail::cell_int(path, record, row[0]);
            s.hadm_id = tabledetail::cell_int(path, record, row[1]);
            s.icustay_id = icustay_id;
            grid.stays.push_back(std::move(s));
        }
        auto& stay = grid.stays.back();
        if (tabledetail::cell_int(path, record, row[3]) != stay.n_hours)
            tabledetail::bad_cell(path, record, "hours_in not dense for stay");
        std::uint16_t word = 0;
        for (std::size_t c = 0; c < kInterventionColumns.size(); ++c)
            if (tabledetail::cell_bool(path, record, row[4 + c]))
                word = static_cast<std::uint16_t>(word | (1u << c));
        stay.hours.push_back(word);
        ++stay.n_hours;
    }
    return grid;
}

// --- benchmark sample tables ---

namespace tabledetail {

inline nlohmann::json stats_json(const std::vector<std::string>& variables,
                                 const std::vector<VarStats>& stats) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t v = 0; v < variables.size(); ++v)
        j[variables[v]] = {{"mean", stats[v].mean}, {"std", stats[v].std}, {"n", stats[v].n}};
    return j;
}

inline std::vector<VarStats> stats_from_json(const nlohmann::json& j,
                                             const std::vector<std::string>& variables) {
    std::vector<VarStats> out(variables.size());
    for (std::size_t v = 0; v < variables.size(); ++v) {
        const auto& e = j.at(variables[v]);
        out[v].mean = e.at("mean").get<double>();
        out[v].std = e.at("std").get<double>();
        out[v].n = e.at("n").get<std::int64_t>();
    }
    return out;
}

inline nlohmann::json split_json(const SplitAssignment& split) {
    // Subjects serialize in id order so the sidecar is byte-stable.
    std::vector<std::pair<std::int64_t, Split>> items(split.by_subject.begin(),
                                                      split.by_subject.end());
    std::sort(items.begin(), items.end());
    nlohmann::json by_subject = nlohmann::json::object();
    for (const auto& [id, s] : items) by_subject[std::to_string(id)] = split_name(s);
    return {{"seed", split.seed},
            {"ratios", {{"train", split.ratios.train}, {"val", split.ratios.val},
                        {"test", split.ratios.test}}},
            {"by_subject", std::move(by_subject)}};
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
    SplitAssignment split;
    split.seed = j.at("seed").get<std::uint64_t>();
    split.ratios.train = j.at("ratios").at("train").get<double>();
    split.ratios.val = j.at("ratios").at("val").get<double>();
    split.ratios.test = j.at("ratios").at("test").get<double>();
    for (const auto& [key, value] : j.at("by_subject").items()) {
        const std::string name = value.get<std::string>();
        Split s;
        if (name == "train") s = Split::train;
        else if (name == "val") s = Split::val;
        else if (name == "test") s = Split::test;
        else throw Error(ErrorCode::parse_error, "unknown split name '" + name + "'");
        split.by_subject.emplace(std::stoll(key), s);
    }
    return split;
}

}  // namespace tabledetail

inline const std::array<const char*, 4> kFixedLabelColumns = {"mort_icu", "mort_hosp", "los3",
                                                              "los7"};

inline void write_fixed_samples(const FixedSampleSet& set, const SplitAssignment& split,
                                std::uint64_t config_hash, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "samples_fixed.csv", std::ios::binary);
        std::vector<std::string> header{"subject_id", "hadm_id", "icustay_id"};
        header.insert(header.end(), set.feature_names.begin(), set.feature_names.end());
        for (const char* c : kFixedLabelColumns) header.emplace_back(c);
        write_csv_row(out, header);
        std::vector<std::string> row;
        for (const auto& s : set.samples) {
            row.assign({std::to_string(s.subject_id), std::to_string(s.hadm_id),
                        std::to_string(s.icustay_id)});
            for (double f : s.features) row.push_back(format_double(f));
            row.push_back(s.mort_icu ? "1" : "0");
            row.push_back(s.mort_hosp ? "1" : "0");
            row.push_back(s.los3 ? "1" : "0");
            row.push_back(s.los7 ? "1" : "0");
            write_csv_row(out, row);
        }
    }
    nlohmann::json j;
    j["task"] = "fixed";
    j["window_hours"] = kFixedWindowHours;
    j["min_stay_hours"] = kFixedMinGridHours;
    j["sentinel"] = set.sentinel;
    j["variables"] = set.variables;
    j["train_stats"] = tabledetail::stats_json(set.variables, set.stats);
    j["split"] = tabledetail::split_json(split);
    j["config_hash"] = to_hex64(config_hash);
    std::ofstream jf(dir / "samples_fixed.json", std::ios::binary);
    jf << j.dump(1) << "\n";
}

inline void write_dynamic_samples(const DynamicSampleSet& set, const SplitAssignment& split,
                                  std::uint64_t config_hash, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "samples_dynamic.csv", std::ios::binary);
        std::vector<std::string> header{"subject_id", "hadm_id", "icustay_id", "t"};
        header.insert(header.end(), set.feature_names.begin(), set.feature_names.end());
        header.emplace_back("label");
        write_csv_row(out, header);
        std::vector<std::string> row;
        for (const auto& s : set.samples) {
            row.assign({std::to_string(s.subject_id), std::to_string(s.hadm_id),
                        std::to_string(s.icustay_id), std::to_string(s.t)});
            for (double f : s.features) row.push_back(format_double(f));
            row.emplace_back(class4_name(s.label));
            write_csv_row(out, row);
        }
    }
    nlohmann::json j;
    j["task"] = "dynamic";
    j["target"] = set.target;
    j["input_hours"] = kDynamicInputHours;
    j["gap_hours"] = kDynamicGapHours;
    j["prediction_hours"] = kDynamicPredHours;
    j["sentinel"] = set.sentinel;
    j["variables"] = set.variables;
    j["train_stats"] = tabledetail::stats_json(set.variables, set.stats);
    j["delta_stats"] = tabledetail::stats_json(set.variables, set.delta_stats);
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& [field, values] : set.vocab.fields)
        vocab.push_back({{"field", field}, {"values", values}});
    j["static_vocab"] = std::move(vocab);
    j["split"] = tabledetail::split_json(split);
    j["config_hash"] = to_hex64(config_hash);
    std::ofstream jf(dir / "samples_dynamic.json", std::ios::binary);
    jf << j.dump(1) << "\n";
}

// What eval needs back from a samples directory: the feature matrix, the
// label columns by name, and each row's split. Features stay opaque —
// training never looks at names.
struct SampleTable {
    std::string task;  // "fixed" | "dynamic"
    std::string target;  // dynamic only
    std::vector<std::string> feature_names;
    std::vector<std::string> label_columns;       // fixed: four; dynamic: {"label"}
    std::vector<std::int64_t> icustay_ids;
    std::vector<Split> splits;
    std::vector<std::vector<double>> features;    // row-major
    std::vector<std::vector<std::string>> labels; // per label column, per row
};

inline SampleTable read_sample_table(const std::filesystem::path& dir, const std::string& task) {
    const bool fixed = task == "fixed";
    const auto csv_path = dir / (fixed ? "samples_fixed.csv" : "samples_dynamic.csv");
    const auto json_path = dir / (fixed ? "samples_fixed.json" : "samples_dynamic.json");
    std::ifstream jf(json_path, std::ios::binary);
    if (!jf) throw Error(ErrorCode::missing_file, json_path.string());
    nlohmann::json j;
    try {
        jf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, json_path.filename().string() + ": " + e.what());
    }
    SampleTable t;
    t.task = j.at("task").get<std::string>();
    if (j.contains("target")) t.target = j.at("target").get<std::string>();
    const SplitAssignment split = tabledetail::split_from_json(j.at("split"));

    auto in = tabledetail::open_table(csv_path);
    CsvReader reader(in, csv_path.filename().string());
    std::vector<std::string> row;
    if (!reader.next_row(row))
        throw Error(ErrorCode::schema_mismatch, csv_path.filename().string() + ": empty file");
    const std::size_t n_index = fixed ? 3 : 4;
    const std::size_t n_labels = fixed ? kFixedLabelColumns.size() : 1;
    if (row.size() < n_index + n_labels)
        throw Error(ErrorCode::schema_mismatch, csv_path.filename().string() + ": short header");
    t.feature_names.assign(row.begin() + static_cast<std::ptrdiff_t>(n_index),
                           row.end() - static_cast<std::ptrdiff_t>(n_labels));
    t.label_columns.assign(row.end() - static_cast<std::ptrdiff_t>(n_labels), row.end());
    std::int64_t record = 1;
    while (reader.next_row(row)) {
        ++record;
        if (row.size() != n_index + t.feature_names.size() + n_labels)
            tabledetail::bad_cell(csv_path, record, "wrong field count");
        const std::int64_t subject_id = tabledetail::cell_int(csv_path, record, row[0]);
        t.icustay_ids.push_back(tabledetail::cell_int(csv_path, record, row[2]));
        auto it = split.by_subject.find(subject_id);
        if (it == split.by_subject.end())
            tabledetail::bad_cell(csv_path, record, "subject missing from split sidecar");
        t.splits.push_back(it->second);
        std::vector<double> f(t.feature_names.size());
        for (std::size_t i = 0; i < f.size(); ++i)
            f[i] = tabledetail::cell_double(csv_path, record, row[n_index + i]);
        t.features.push_back(std::move(f));
        if (t.labels.empty()) t.labels.resize(n_labels);
        for (std::size_t i = 0; i < n_labels; ++i)
            t.labels[i].push_back(row[n_index + t.feature_names.size() + i]);
    }
    if (t.labels.empty()) t.labels.resize(n_labels);
    return t;
}

}  // namespace ehrgrid
