#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrgrid/csv.hpp"
#include "ehrgrid/error.hpp"

namespace ehrgrid {

// How a measurement's unit string should be interpreted before aggregation.
enum class UnitClass { none, weight, height, temperature };

inline std::optional<UnitClass> parse_unit_class(const std::string& s) {
    if (s.empty() || s == "none") return UnitClass::none;
    if (s == "weight") return UnitClass::weight;
    if (s == "height") return UnitClass::height;
    if (s == "temperature") return UnitClass::temperature;
    return std::nullopt;
}

struct ItemMapEntry {
    std::int64_t itemid = 0;
    std::string raw_label;
    std::string aggregate_group;
    UnitClass unit_class = UnitClass::none;
};

struct ItemMap {
    std::unordered_map<std::int64_t, ItemMapEntry> by_itemid;

    const ItemMapEntry* find(std::int64_t itemid) const {
        auto it = by_itemid.find(itemid);
        return it == by_itemid.end() ? nullptr : &it->second;
    }

    // The variable name an event lands under: the clinical aggregate when
    // grouping, the decimal itemid when working at raw-item resolution.
    // Unmapped items resolve to nothing and are dropped upstream.
    std::optional<std::string> resolve_variable(std::int64_t itemid, bool group_by_level2) const {
        const ItemMapEntry* e = find(itemid);
        if (!e) return std::nullopt;
        if (group_by_level2) return e->aggregate_group;
        return std::to_string(itemid);
    }
};

inline ItemMap load_item_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    std::string file = path.filename().string();
    CsvReader reader(in, file);
    std::vector<std::string> row;
    if (!reader.next_row(row))
        throw Error(ErrorCode::schema_mismatch, file + ": empty file, header row required");
    const std::vector<std::string> expected{"itemid", "raw_label", "aggregate_group", "unit_class"};
    if (row != expected)
        throw Error(ErrorCode::schema_mismatch,
                    file + ": header must be itemid,raw_label,aggregate_group,unit_class");

    ItemMap map;
    while (reader.next_row(row)) {
        if (row.size() != expected.size())
            throw Error(ErrorCode::parse_error, file + " row " +
                                                    std::to_string(reader.record_number()) +
                                                    ": expected 4 fields");
        ItemMapEntry e;
        auto id = try_parse_int(row[0]);
        if (!id)
            throw Error(ErrorCode::parse_error, file + " row " +
                                                    std::to_string(reader.record_number()) +
                                                    ": itemid not an integer: '" + row[0] + "'");
        e.itemid = *id;
        e.raw_label = row[1];
        e.aggregate_group = row[2];
        if (e.aggregate_group.empty())
            throw Error(ErrorCode::parse_error, file + " row " +
                                                    std::to_string(reader.record_number()) +
                                                    ": aggregate_group is empty");
        auto uc = parse_unit_class(row[3]);
        if (!uc)
            throw Error(ErrorCode::unknown_unit_class,
                        file + " row " + std::to_string(reader.record_number()) +
                            ": unknown unit_class '" + row[3] + "'");
        e.unit_class = *uc;
        if (!map.by_itemid.emplace(e.itemid, e).second)
            throw Error(ErrorCode::duplicate_itemid,
                        file + ": itemid " + std::to_string(e.itemid) + " appears twice");
    }
    return map;
}

// Per-variable plausibility bounds. A variable can prescribe no bounds at
// all (every field blank); partial rows are rejected so a typo can't
// silently disable half the policy.
struct VariableRange {
    std::string variable;
    bool has_bounds = false;
    double outlier_low = 0.0;
    double valid_low = 0.0;
    double valid_high = 0.0;
    double outlier_high = 0.0;
};

struct RangeTable {
    std::unordered_map<std::string, VariableRange> by_variable;

    const VariableRange* find(const std::string& variable) const {
        auto it = by_variable.find(variable);
        return it == by_variable.end() ? nullptr : &it->second;
    }
};

inline RangeTable load_variable_ranges(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    std::string file = path.filename().string();
    CsvReader reader(in, file);
    std::vector<std::string> row;
    if (!reader.next_row(row))
        throw Error(ErrorCode::schema_mismatch, file + ": empty file, header row required");
    const std::vector<std::string> expected{"variable", "outlier_low", "valid_low", "valid_high",
                                            "outlier_high"};
    if (row != expected)
        throw Error(ErrorCode::schema_mismatch,
                    file + ": header must be variable,outlier_low,valid_low,valid_high,outlier_high");

    RangeTable table;
    while (reader.next_row(row)) {
        if (row.size() != expected.size())
            throw Error(ErrorCode::parse_error, file + " row " +
                                                    std::to_string(reader.record_number()) +
                                                    ": expected 5 fields");
        VariableRange r;
        r.variable = row[0];
        if (r.variable.empty())
            throw Error(ErrorCode::parse_error, file + " row " +
                                                    std::to_string(reader.record_number()) +
                                                    ": variable name is empty");
        int blanks = 0;
        for (int i = 1; i <= 4; ++i) blanks += row[i].empty() ? 1 : 0;
        if (blanks == 4) {
            r.has_bounds = false;
        } else if (blanks == 0) {
            auto parse = [&](int i, const char* name) {
                auto v = try_parse_double(row[i]);
                if (!v)
                    throw Error(ErrorCode::parse_error,
                                file + " row " + std::to_string(reader.record_number()) + ": " +
                                    name + " not a number: '" + row[i] + "'");
                return *v;
            };
            r.has_bounds = true;
            r.outlier_low = parse(1, "outlier_low");
            r.valid_low = parse(2, "valid_low");
            r.valid_high = parse(3, "valid_high");
            r.outlier_high = parse(4, "outlier_high");
            if (!(r.outlier_low <= r.valid_low && r.valid_low <= r.valid_high &&
                  r.valid_high <= r.outlier_high))
                throw Error(ErrorCode::range_order_violation,
                            file + " row " + std::to_string(reader.record_number()) + ": '" +
                                r.variable +
                                "' bounds must satisfy outlier_low <= valid_low <= valid_high <= "
                                "outlier_high");
        } else {
            throw Error(ErrorCode::parse_error,
                        file + " row " + std::to_string(reader.record_number()) + ": '" +
                            r.variable + "' has a partially blank range; give all four bounds or none");
        }
        if (!table.by_variable.emplace(r.variable, r).second)
            throw Error(ErrorCode::parse_error,
                        file + ": variable '" + r.variable + "' appears twice");
    }
    return table;
}

struct Resources {
    ItemMap item_map;
    RangeTable ranges;
};

inline Resources load_resources(const std::filesystem::path& dir) {
    Resources res;
    res.item_map = load_item_map(dir / "itemid_to_variable_map.csv");
    res.ranges = load_variable_ranges(dir / "variable_ranges.csv");
    return res;
}

// Knobs governing cohort selection and aggregation. Defaults reproduce the
// standard extraction; a config file and command-line flags can override.
struct ExtractConfig {
    double min_age = 15.0;         // years, inclusive lower bound
    double min_duration = 12.0;    // hours, inclusive lower bound on stay length
    double max_duration = 240.0;   // hours, exclusive upper bound
    bool group_by_level2 = true;   // aggregate itemids into clinical variables
    double min_percent = 0.0;      // drop variables observed in fewer % of stays
};

inline void validate_config(const ExtractConfig& cfg) {
    if (cfg.min_age < 0) throw Error(ErrorCode::bad_config, "min_age must be non-negative");
    if (cfg.min_duration < 0)
        throw Error(ErrorCode::bad_config, "min_duration must be non-negative");
    if (cfg.max_duration <= cfg.min_duration)
        throw Error(ErrorCode::bad_config, "max_duration must exceed min_duration");
    if (cfg.min_percent < 0 || cfg.min_percent > 100)
        throw Error(ErrorCode::bad_config, "min_percent must be within [0, 100]");
}

// key = value file, '#' starts a comment, blank lines ignored.
inline void apply_config_file(ExtractConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        std::size_t b = s.find_first_not_of(" \t\r");
        std::size_t e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::bad_config, path.filename().string() + " line " +
                                                   std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto number = [&]() {
            auto v = try_parse_double(value);
            if (!v)
                throw Error(ErrorCode::bad_config, path.filename().string() + " line " +
                                                       std::to_string(lineno) + ": '" + key +
                                                       "' needs a number, got '" + value + "'");
            return *v;
        };
        if (key == "min_age") {
            cfg.min_age = number();
        } else if (key == "min_duration") {
            cfg.min_duration = number();
        } else if (key == "max_duration") {
            cfg.max_duration = number();
        } else if (key == "min_percent") {
            cfg.min_percent = number();
        } else if (key == "group_by_level2") {
            if (value == "true" || value == "1")
                cfg.group_by_level2 = true;
            else if (value == "false" || value == "0")
                cfg.group_by_level2 = false;
            else
                throw Error(ErrorCode::bad_config, path.filename().string() + " line " +
                                                       std::to_string(lineno) +
                                                       ": group_by_level2 must be true or false");
        } else {
            throw Error(ErrorCode::bad_config, path.filename().string() + " line " +
                                                   std::to_string(lineno) + ": unknown key '" +
                                                   key + "'");
        }
    }
}

}  // namespace ehrgrid
