#pragma once

#include <chrono>
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
#include "ehrgrid/error.hpp"
#include "ehrgrid/eval.hpp"
#include "ehrgrid/ingest.hpp"
#include "ehrgrid/interventions.hpp"
#include "ehrgrid/report.hpp"
#include "ehrgrid/resources.hpp"
#include "ehrgrid/synthgen.hpp"
#include "ehrgrid/table_io.hpp"
#include "ehrgrid/timeseries.hpp"

namespace ehrgrid {

namespace pipedetail {

class StageClock {
public:
    std::int64_t lap() {
        const auto now = std::chrono::steady_clock::now();
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - last_).count();
        last_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace pipedetail

// Canonical one-line-per-key rendering of the config; its hash ties output
// artifacts to the settings that produced them.
inline std::string config_canonical(const ExtractConfig& cfg) {
    std::string s;
    s += "group_by_level2=" + std::string(cfg.group_by_level2 ? "1" : "0") + "\n";
    s += "max_duration=" + format_double(cfg.max_duration) + "\n";
    s += "min_age=" + format_double(cfg.min_age) + "\n";
    s += "min_duration=" + format_double(cfg.min_duration) + "\n";
    s += "min_percent=" + format_double(cfg.min_percent) + "\n";
    return s;
}

inline std::uint64_t config_hash(const ExtractConfig& cfg) {
    return fnv1a64_string(config_canonical(cfg));
}

struct ExtractArtifacts {
    CohortResult cohort;
    std::int64_t n_events_loaded = 0;
    std::int64_t n_attach_dropped = 0;
    HourlyGrid grid;  // after the missingness filter
    std::vector<std::string> dropped_variables;
    OutlierReport outliers;
    InterventionGrid interventions;
    nlohmann::json manifest;
};

// The full extract stage: load + attach + cohort + hourly aggregation +
// missingness filter + intervention rasterization, then the four output
// tables and a manifest pinning inputs, outputs, and config by digest.
inline ExtractArtifacts run_extract(const std::filesystem::path& source_dir,
                                    const std::filesystem::path& resources_dir,
                                    const std::filesystem::path& out_dir,
                                    const ExtractConfig& cfg, int threads = 1) {
    validate_config(cfg);
    ExtractArtifacts art;
    nlohmann::json timings;
    pipedetail::StageClock clock;

    const Resources res = load_resources(resources_dir);
    SourceDataset ds = load_source_dataset(source_dir);
    art.n_events_loaded = static_cast<std::int64_t>(ds.events.size());
    timings["load_ms"] = clock.lap();

    AttachResult attach = attach_stay_to_lab_events(std::move(ds.events), ds.stays);
    ds.events = std::move(attach.events);
    art.n_attach_dropped = attach.n_dropped;
    timings["attach_ms"] = clock.lap();

    art.cohort = select_cohort(ds, cfg);
    timings["cohort_ms"] = clock.lap();

    auto [grid, outliers] =
        aggregate_hourly(ds.events, art.cohort.rows, res.item_map, res.ranges, cfg, threads);
    art.outliers = std::move(outliers);
    auto filtered = filter_missingness(std::move(grid), cfg.min_percent);
    art.grid = std::move(filtered.grid);
    art.dropped_variables = std::move(filtered.dropped);
    timings["aggregate_ms"] = clock.lap();

    art.interventions = build_intervention_grid(ds.intervention_events, art.cohort.rows);
    timings["interventions_ms"] = clock.lap();

    std::filesystem::create_directories(out_dir);
    write_cohort_table(art.cohort.rows, out_dir / "patients.csv");
    write_grid_table(art.grid, out_dir / "vitals_labs.csv", /*mean_only=*/false);
    write_grid_table(art.grid, out_dir / "vitals_labs_mean.csv", /*mean_only=*/true);
    write_intervention_table(art.interventions, out_dir / "interventions.csv");
    timings["write_ms"] = clock.lap();

    nlohmann::json m;
    m["config"] = {{"min_age", cfg.min_age},
                   {"min_duration", cfg.min_duration},
                   {"max_duration", cfg.max_duration},
                   {"group_by_level2", cfg.group_by_level2},
                   {"min_percent", cfg.min_percent}};
    m["config_hash"] = to_hex64(config_hash(cfg));
    nlohmann::json inputs = nlohmann::json::object();
    for (const char* name : {"patients.csv", "admissions.csv", "icustays.csv", "events.csv",
                             "intervention_events.csv"})
        inputs[name] = to_hex64(fnv1a64_file(source_dir / name));
    for (const char* name : {"itemid_to_variable_map.csv", "variable_ranges.csv"})
        inputs[name] = to_hex64(fnv1a64_file(resources_dir / name));
    m["inputs"] = std::move(inputs);
    m["cohort"] = {{"n_stays", art.cohort.counts.n_stays},
                   {"n_selected", art.cohort.counts.n_selected},
                   {"exclusions",
                    {{"not_first", art.cohort.counts.n_not_first},
                     {"age", art.cohort.counts.n_age},
                     {"too_short", art.cohort.counts.n_too_short},
                     {"too_long", art.cohort.counts.n_too_long}}}};
    m["events"] = {{"n_loaded", art.n_events_loaded},
                   {"n_attach_dropped", art.n_attach_dropped}};
    m["outliers"] = {{"kept", art.outliers.n_kept()},
                     {"clamped_low", art.outliers.n_clamped_low()},
                     {"clamped_high", art.outliers.n_clamped_high()},
                     {"dropped", art.outliers.n_dropped()},
                     {"unmapped", art.outliers.n_unmapped},
                     {"unit_errors", art.outliers.n_unit_errors},
                     {"out_of_stay", art.outliers.n_out_of_stay}};
    m["variables"] = {{"kept", art.grid.variables}, {"dropped", art.dropped_variables}};
    nlohmann::json outputs = nlohmann::json::object();
    for (const char* name :
         {"patients.csv", "vitals_labs.csv", "vitals_labs_mean.csv", "interventions.csv"})
        outputs[name] = to_hex64(fnv1a64_file(out_dir / name));
    m["outputs"] = std::move(outputs);
    m["timings_ms"] = std::move(timings);
    art.manifest = std::move(m);

    std::ofstream mf(out_dir / "manifest.json", std::ios::binary);
    mf << art.manifest.dump(1) << "\n";
    return art;
}

namespace pipedetail {

inline nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, path.filename().string() + ": " + e.what());
    }
    return j;
}

inline std::uint64_t extracted_config_hash(const std::filesystem::path& extracted_dir) {
    const auto manifest = load_json(extracted_dir / "manifest.json");
    const std::string hex = manifest.at("config_hash").get<std::string>();
    return std::stoull(hex, nullptr, 16);
}

}  // namespace pipedetail

struct PrepArtifacts {
    SplitAssignment split;
    std::int64_t n_samples = 0;
    std::size_t n_features = 0;
};

inline PrepArtifacts run_prep_fixed(const std::filesystem::path& extracted_dir,
                                    const std::filesystem::path& out_dir, std::uint64_t seed,
                                    SplitRatios ratios = {}) {
    const auto cohort = read_cohort_table(extracted_dir / "patients.csv");
    const auto grid = read_grid_table(extracted_dir / "vitals_labs.csv");
    const auto split = split_cohort(cohort, ratios, seed);
    const auto set = build_fixed_samples(grid, cohort, split);
    write_fixed_samples(set, split, pipedetail::extracted_config_hash(extracted_dir), out_dir);
    return {split, static_cast<std::int64_t>(set.samples.size()), set.feature_names.size()};
}

inline PrepArtifacts run_prep_dynamic(const std::filesystem::path& extracted_dir,
                                      const std::filesystem::path& out_dir,
                                      const std::string& target, std::uint64_t seed,
                                      SplitRatios ratios = {}) {
    const auto cohort = read_cohort_table(extracted_dir / "patients.csv");
    const auto grid = read_grid_table(extracted_dir / "vitals_labs.csv");
    const auto igrid = read_intervention_table(extracted_dir / "interventions.csv");
    const auto split = split_cohort(cohort, ratios, seed);
    const auto set = build_dynamic_samples(grid, igrid, cohort, split, target);
    write_dynamic_samples(set, split, pipedetail::extracted_config_hash(extracted_dir), out_dir);
    return {split, static_cast<std::int64_t>(set.samples.size()), set.feature_names.size()};
}

struct EvalArtifacts {
    std::string task;
    std::int64_t n_train = 0;
    std::int64_t n_test = 0;
    MetricsReport metrics;             // binary tasks; Onset-vs-rest for dynamic
    std::optional<double> macro_auroc; // dynamic only
    nlohmann::json json;
};

namespace pipedetail {

inline nlohmann::json metrics_json(const MetricsReport& m) {
    return {{"auroc", m.auroc},     {"auprc", m.auprc}, {"accuracy", m.accuracy},
            {"f1", m.f1},           {"threshold", m.threshold},
            {"n_pos", m.n_pos},     {"n_neg", m.n_neg}};
}

}  // namespace pipedetail

// Trains the built-in L2 logistic baseline on the train split and reports
// held-out test metrics for one of the four fixed outcome columns.
inline EvalArtifacts run_eval_fixed(const std::filesystem::path& samples_dir,
                                    const std::filesystem::path& out_dir,
                                    const std::string& task, const LogRegOptions& opt = {}) {
    const SampleTable t = read_sample_table(samples_dir, "fixed");
    const auto col = std::find(t.label_columns.begin(), t.label_columns.end(), task);
    if (col == t.label_columns.end())
        throw Error(ErrorCode::bad_config, "unknown fixed task '" + task + "'");
    const auto& label_strings = t.labels[static_cast<std::size_t>(col - t.label_columns.begin())];

    std::vector<const double*> train_rows;
    std::vector<int> train_labels;
    std::vector<double> test_scores;
    std::vector<int> test_labels;
    for (std::size_t i = 0; i < t.features.size(); ++i) {
        if (t.splits[i] == Split::train) {
            train_rows.push_back(t.features[i].data());
            train_labels.push_back(label_strings[i] == "1" ? 1 : 0);
        }
    }
    const LogRegModel model =
        train_logreg(train_rows, t.feature_names.size(), train_labels, opt);
    for (std::size_t i = 0; i < t.features.size(); ++i) {
        if (t.splits[i] == Split::test) {
            test_scores.push_back(model.score(t.features[i].data()));
            test_labels.push_back(label_strings[i] == "1" ? 1 : 0);
        }
    }

    EvalArtifacts art;
    art.task = task;
    art.n_train = static_cast<std::int64_t>(train_rows.size());
    art.n_test = static_cast<std::int64_t>(test_scores.size());
    art.metrics = compute_metrics(test_scores, test_labels);
    art.json = {{"task", task},
                {"baseline", "logreg"},
                {"n_train", art.n_train},
                {"n_test", art.n_test},
                {"test", pipedetail::metrics_json(art.metrics)}};
    std::filesystem::create_directories(out_dir);
    std::ofstream jf(out_dir / ("metrics_" + task + ".json"), std::ios::binary);
    jf << art.json.dump(1) << "\n";
    return art;
}

// External scores for the fixed tasks: a two-column CSV (icustay_id,
// score), one row per scored stay; metrics are computed over exactly the
// scored rows.
inline EvalArtifacts run_eval_predictions(const std::filesystem::path& samples_dir,
                                          const std::filesystem::path& predictions_csv,
                                          const std::filesystem::path& out_dir,
                                          const std::string& task) {
    const SampleTable t = read_sample_table(samples_dir, "fixed");
    const auto col = std::find(t.label_columns.begin(), t.label_columns.end(), task);
    if (col == t.label_columns.end())
        throw Error(ErrorCode::bad_config, "unknown fixed task '" + task + "'");
    const auto& label_strings = t.labels[static_cast<std::size_t>(col - t.label_columns.begin())];
    std::map<std::int64_t, int> label_by_stay;
    for (std::size_t i = 0; i < t.icustay_ids.size(); ++i)
        label_by_stay[t.icustay_ids[i]] = label_strings[i] == "1" ? 1 : 0;

    std::ifstream in(predictions_csv, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_file, predictions_csv.string());
    CsvReader reader(in, predictions_csv.filename().string());
    std::vector<std::string> row;
    if (!reader.next_row(row) || row.size() != 2)
        throw Error(ErrorCode::schema_mismatch,
                    predictions_csv.filename().string() + ": expected two columns (id, score)");
    std::vector<double> scores;
    std::vector<int> labels;
    std::int64_t record = 1;
    while (reader.next_row(row)) {
        ++record;
        if (row.size() != 2)
            tabledetail::bad_cell(predictions_csv, record, "wrong field count");
        const std::int64_t id = tabledetail::cell_int(predictions_csv, record, row[0]);
        auto it = label_by_stay.find(id);
        if (it == label_by_stay.end())
            tabledetail::bad_cell(predictions_csv, record,
                                  "icustay_id " + std::to_string(id) + " not in samples");
        scores.push_back(tabledetail::cell_double(predictions_csv, record, row[1]));
        labels.push_back(it->second);
    }

    EvalArtifacts art;
    art.task = task;
    art.n_test = static_cast<std::int64_t>(scores.size());
    art.metrics = compute_metrics(scores, labels);
    art.json = {{"task", task},
                {"predictions", predictions_csv.filename().string()},
                {"n_scored", art.n_test},
                {"test", pipedetail::metrics_json(art.metrics)}};
    std::filesystem::create_directories(out_dir);
    std::ofstream jf(out_dir / ("metrics_" + task + ".json"), std::ios::binary);
    jf << art.json.dump(1) << "\n";
    return art;
}

// Four one-vs-rest baselines over the intervention classes; headline
// number is the unweighted mean of the per-class AUROCs on test.
inline EvalArtifacts run_eval_dynamic(const std::filesystem::path& samples_dir,
                                      const std::filesystem::path& out_dir,
                                      const LogRegOptions& opt = {}) {
    const SampleTable t = read_sample_table(samples_dir, "dynamic");
    const auto& label_strings = t.labels[0];
    std::vector<int> class_ids(label_strings.size(), -1);
    for (std::size_t i = 0; i < label_strings.size(); ++i) {
        for (std::size_t c = 0; c < kClass4All.size(); ++c)
            if (label_strings[i] == class4_name(kClass4All[c]))
                class_ids[i] = static_cast<int>(c);
        if (class_ids[i] < 0)
            throw Error(ErrorCode::parse_error,
                        "samples_dynamic.csv: unknown label '" + label_strings[i] + "'");
    }

    std::vector<const double*> train_rows;
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < t.features.size(); ++i) {
        if (t.splits[i] == Split::train) {
            train_rows.push_back(t.features[i].data());
            train_idx.push_back(i);
        } else if (t.splits[i] == Split::test) {
            test_idx.push_back(i);
        }
    }

    std::vector<std::vector<double>> class_scores(kClass4All.size());
    std::vector<int> test_labels;
    for (std::size_t i : test_idx) test_labels.push_back(class_ids[i]);
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < kClass4All.size(); ++c) {
        std::vector<int> binary;
        binary.reserve(train_idx.size());
        for (std::size_t i : train_idx) binary.push_back(class_ids[i] == static_cast<int>(c));
        const bool trainable =
            std::count(binary.begin(), binary.end(), 1) > 0 &&
            std::count(binary.begin(), binary.end(), 0) > 0;
        LogRegModel model;
        if (trainable) model = train_logreg(train_rows, t.feature_names.size(), binary, opt);
        auto& scores = class_scores[c];
        scores.reserve(test_idx.size());
        for (std::size_t i : test_idx)
            scores.push_back(trainable ? model.score(t.features[i].data()) : 0.5);

        std::vector<int> test_binary;
        test_binary.reserve(test_idx.size());
        for (int y : test_labels) test_binary.push_back(y == static_cast<int>(c));
        const auto pos = std::count(test_binary.begin(), test_binary.end(), 1);
        if (pos > 0 && pos < static_cast<std::ptrdiff_t>(test_binary.size()))
            per_class[class4_name(kClass4All[c])] = auroc(scores, test_binary);
        else
            per_class[class4_name(kClass4All[c])] = nullptr;
    }

    EvalArtifacts art;
    art.task = t.target;
    art.n_train = static_cast<std::int64_t>(train_idx.size());
    art.n_test = static_cast<std::int64_t>(test_idx.size());
    art.macro_auroc = macro_auroc(class_scores, test_labels);
    {
        // Onset-vs-rest is the closest binary readout; keep it alongside.
        std::vector<int> onset(test_labels.size());
        for (std::size_t i = 0; i < test_labels.size(); ++i) onset[i] = test_labels[i] == 0;
        art.metrics = compute_metrics(class_scores[0], onset);
    }
    art.json = {{"task", "dynamic"},
                {"target", t.target},
                {"baseline", "logreg"},
                {"n_train", art.n_train},
                {"n_test", art.n_test},
                {"macro_auroc", *art.macro_auroc},
                {"per_class_auroc", per_class},
                {"onset_vs_rest", pipedetail::metrics_json(art.metrics)}};
    std::filesystem::create_directories(out_dir);
    std::ofstream jf(out_dir / ("metrics_dynamic_" + t.target + ".json"), std::ios::binary);
    jf << art.json.dump(1) << "\n";
    return art;
}

// Reads back an extracted directory and builds the cohort summary; keeps
// the CLI honest about consuming its own outputs.
inline CohortReport run_report(const std::filesystem::path& extracted_dir) {
    for (const char* name : {"patients.csv", "vitals_labs.csv"})
        if (!std::filesystem::exists(extracted_dir / name))
            throw Error(ErrorCode::missing_tables,
                        (extracted_dir / name).string() + " (run extract first)");
    const auto cohort = read_cohort_table(extracted_dir / "patients.csv");
    const auto grid = read_grid_table(extracted_dir / "vitals_labs.csv");
    return build_cohort_report(cohort, grid);
}

struct GensynthArtifacts {
    std::int64_t n_stays = 0;
    std::int64_t n_events = 0;
    std::int64_t n_selected = 0;
};

inline GensynthArtifacts run_gensynth(const GenParams& params,
                                      const std::filesystem::path& out_dir) {
    const GenOutput out = generate(params);
    save_source_dataset(out.dataset, out_dir);
    save_ground_truth(out.truth, out_dir);
    return {out.truth.n_stays, out.truth.n_events, out.truth.n_selected};
}

}  // namespace ehrgrid
