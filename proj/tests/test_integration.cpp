#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "catch_amalgamated.hpp"
#include "ehrgrid/pipeline.hpp"
#include "ehrgrid/report.hpp"
#include "ehrgrid/synthgen.hpp"
#include "ehrgrid/table_io.hpp"

using namespace ehrgrid;
namespace fs = std::filesystem;

#ifndef EHRGRID_TEST_RESOURCES
#define EHRGRID_TEST_RESOURCES "resources"
#endif

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// One generated world shared by the read-only integration tests below.
// 300 subjects keeps the file fast while leaving every split populated.
struct World {
    GenOutput gen;
    TempDir dir;
    ExtractArtifacts extracted;

    World()
        : gen(generate(params())),
          dir("ehrgrid_integration_world"),
          extracted(make_extracted()) {}

    static GenParams params() {
        GenParams p;
        p.n_subjects = 300;
        p.seed = 31;
        p.mortality_rate = 0.2;
        return p;
    }

    ExtractArtifacts make_extracted() {
        save_source_dataset(gen.dataset, dir.path / "source");
        save_ground_truth(gen.truth, dir.path / "source");
        return run_extract(dir.path / "source", EHRGRID_TEST_RESOURCES, dir.path / "extracted",
                           ExtractConfig{}, 1);
    }
};

const World& world() {
    static World w;
    return w;
}

}  // namespace

TEST_CASE("the generator ledger round-trips through its files") {
    const World& w = world();
    const GroundTruth read = load_ground_truth(w.dir.path / "source");
    CHECK(read.seed == w.gen.truth.seed);
    CHECK(read.n_stays == w.gen.truth.n_stays);
    CHECK(read.n_events == w.gen.truth.n_events);
    CHECK(read.n_selected == w.gen.truth.n_selected);
    CHECK(read.stays.size() == w.gen.truth.stays.size());
    REQUIRE(read.cells.size() == w.gen.truth.cells.size());
    for (std::size_t i = 0; i < read.cells.size(); ++i) {
        CHECK(read.cells[i].icustay_id == w.gen.truth.cells[i].icustay_id);
        CHECK(read.cells[i].hour == w.gen.truth.cells[i].hour);
        CHECK(read.cells[i].var == w.gen.truth.cells[i].var);
        CHECK(read.cells[i].mean == w.gen.truth.cells[i].mean);  // exact decimal round trip
        CHECK(read.cells[i].count == w.gen.truth.cells[i].count);
        CHECK(read.cells[i].std == w.gen.truth.cells[i].std);
    }
    for (std::size_t i = 0; i < read.stays.size(); ++i) {
        CHECK(read.stays[i].icustay_id == w.gen.truth.stays[i].icustay_id);
        CHECK(read.stays[i].status == w.gen.truth.stays[i].status);
        CHECK(read.stays[i].interventions == w.gen.truth.stays[i].interventions);
    }
}

TEST_CASE("the generator catalog agrees with the shipped resource tables") {
    const Resources res = load_resources(EHRGRID_TEST_RESOURCES);
    std::set<std::string> catalog_names;
    for (const auto& var : gen_catalog()) {
        catalog_names.insert(var.name);
        for (std::int64_t itemid : var.itemids) {
            const auto* entry = res.item_map.find(itemid);
            REQUIRE(entry != nullptr);
            CHECK(entry->aggregate_group == var.name);
        }
        const auto* range = res.ranges.find(var.name);
        REQUIRE(range != nullptr);
        CHECK(range->has_bounds == var.has_bounds);
        if (var.has_bounds) {
            CHECK(range->outlier_low == var.outlier_low);
            CHECK(range->valid_low == var.valid_low);
            CHECK(range->valid_high == var.valid_high);
            CHECK(range->outlier_high == var.outlier_high);
        }
    }
    // The shipped map may know more variables than the generator plants, but
    // every mapped group must have a row in the ranges table so extraction
    // never improvises bounds.
    for (const auto& [itemid, entry] : res.item_map.by_itemid)
        CHECK(res.ranges.find(entry.aggregate_group) != nullptr);
}

TEST_CASE("a small end-to-end extraction matches the planned world") {
    const World& w = world();
    const GroundTruth& truth = w.gen.truth;
    const ExtractArtifacts& art = w.extracted;

    CHECK(art.cohort.counts.n_stays == truth.n_stays);
    CHECK(art.cohort.counts.n_selected == truth.n_selected);
    CHECK(art.cohort.counts.n_not_first == truth.n_not_first);
    CHECK(art.cohort.counts.n_age == truth.n_age);
    CHECK(art.cohort.counts.n_too_short == truth.n_too_short);
    CHECK(art.cohort.counts.n_too_long == truth.n_too_long);
    CHECK(art.n_attach_dropped == truth.n_attach_dropped);
    CHECK(art.outliers.n_unmapped == truth.n_unmapped);
    CHECK(art.outliers.n_unit_errors == truth.n_unit_errors);
    CHECK(art.outliers.n_out_of_stay == truth.n_out_of_stay);

    std::int64_t cells = 0;
    for (const auto& s : art.grid.stays) cells += static_cast<std::int64_t>(s.cells.size());
    CHECK(cells == static_cast<std::int64_t>(truth.cells.size()));

    for (const char* name :
         {"patients.csv", "vitals_labs.csv", "vitals_labs_mean.csv", "interventions.csv",
          "manifest.json"})
        CHECK(fs::exists(w.dir.path / "extracted" / name));
}

TEST_CASE("generated repeat stays appear at roughly the configured rate") {
    GenParams p;
    p.n_subjects = 2000;
    p.seed = 77;
    const GenOutput out = generate(p);
    const double rate =
        static_cast<double>(out.truth.n_not_first) / static_cast<double>(p.n_subjects);
    CHECK(rate > 0.06);
    CHECK(rate < 0.14);

    // Spot the documented special populations.
    CHECK(out.truth.n_age > 0);
    CHECK(out.truth.n_too_short > 0);
    CHECK(out.truth.n_too_long > 0);
    CHECK(out.truth.n_unmapped > 0);
    CHECK(out.truth.n_unit_errors > 0);
    CHECK(out.truth.n_out_of_stay > 0);
    CHECK(out.truth.n_attach_dropped > 0);
}

TEST_CASE("extracted tables read back equal to what was written") {
    const World& w = world();
    const fs::path dir = w.dir.path / "extracted";

    const auto cohort = read_cohort_table(dir / "patients.csv");
    REQUIRE(cohort.size() == w.extracted.cohort.rows.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        CHECK(cohort[i].icustay_id == w.extracted.cohort.rows[i].icustay_id);
        CHECK(cohort[i].subject_id == w.extracted.cohort.rows[i].subject_id);
        CHECK(cohort[i].age == w.extracted.cohort.rows[i].age);
        CHECK(cohort[i].intime.sec == w.extracted.cohort.rows[i].intime.sec);
        CHECK(cohort[i].outtime.sec == w.extracted.cohort.rows[i].outtime.sec);
        CHECK(cohort[i].mort_icu == w.extracted.cohort.rows[i].mort_icu);
        CHECK(cohort[i].mort_hosp == w.extracted.cohort.rows[i].mort_hosp);
        CHECK(cohort[i].los_icu_hours == w.extracted.cohort.rows[i].los_icu_hours);
        CHECK(cohort[i].gender == w.extracted.cohort.rows[i].gender);
        CHECK(cohort[i].ethnicity == w.extracted.cohort.rows[i].ethnicity);
    }

    const HourlyGrid grid = read_grid_table(dir / "vitals_labs.csv");
    REQUIRE(grid.variables == w.extracted.grid.variables);
    REQUIRE(grid.stays.size() == w.extracted.grid.stays.size());
    for (std::size_t s = 0; s < grid.stays.size(); ++s) {
        const auto& a = grid.stays[s];
        const auto& b = w.extracted.grid.stays[s];
        CHECK(a.icustay_id == b.icustay_id);
        CHECK(a.n_hours == b.n_hours);
        REQUIRE(a.cells.size() == b.cells.size());
        for (std::size_t c = 0; c < a.cells.size(); ++c) {
            CHECK(a.cells[c].hour == b.cells[c].hour);
            CHECK(a.cells[c].var == b.cells[c].var);
            CHECK(a.cells[c].cell.mean == b.cells[c].cell.mean);
            CHECK(a.cells[c].cell.count == b.cells[c].cell.count);
            CHECK(a.cells[c].cell.std == b.cells[c].cell.std);
        }
    }

    const InterventionGrid ig = read_intervention_table(dir / "interventions.csv");
    REQUIRE(ig.stays.size() == w.extracted.interventions.stays.size());
    for (std::size_t s = 0; s < ig.stays.size(); ++s) {
        CHECK(ig.stays[s].icustay_id == w.extracted.interventions.stays[s].icustay_id);
        CHECK(ig.stays[s].n_hours == w.extracted.interventions.stays[s].n_hours);
        CHECK(ig.stays[s].hours == w.extracted.interventions.stays[s].hours);
    }
}

TEST_CASE("the manifest is identical across reruns except for timings") {
    const World& w = world();
    run_extract(w.dir.path / "source", EHRGRID_TEST_RESOURCES, w.dir.path / "extracted2",
                ExtractConfig{}, 2);

    auto manifest_without_timings = [](const fs::path& p) {
        std::ifstream in(p);
        nlohmann::json j;
        in >> j;
        j.erase("timings_ms");
        return j;
    };
    const auto a = manifest_without_timings(w.dir.path / "extracted" / "manifest.json");
    const auto b = manifest_without_timings(w.dir.path / "extracted2" / "manifest.json");
    CHECK(a == b);
    CHECK(a.at("cohort").at("n_selected").get<std::int64_t>() ==
          w.gen.truth.n_selected);
    CHECK(a.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("different configs produce different fingerprints") {
    ExtractConfig a;
    ExtractConfig b;
    b.min_age = 18.0;
    CHECK(config_hash(a) != config_hash(b));
    ExtractConfig c;
    c.group_by_level2 = false;
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a) == config_hash(ExtractConfig{}));
}

TEST_CASE("prepared samples round-trip through their files bit for bit") {
    const World& w = world();
    const fs::path samples = w.dir.path / "samples_fixed";
    run_prep_fixed(w.dir.path / "extracted", samples, 7);

    // Rebuild the same samples in memory.
    const auto split = split_cohort(w.extracted.cohort.rows, SplitRatios{}, 7);
    const FixedSampleSet set =
        build_fixed_samples(w.extracted.grid, w.extracted.cohort.rows, split);

    const SampleTable table = read_sample_table(samples, "fixed");
    CHECK(table.task == "fixed");
    CHECK(table.feature_names == set.feature_names);
    CHECK(table.label_columns ==
          std::vector<std::string>{"mort_icu", "mort_hosp", "los3", "los7"});
    REQUIRE(table.features.size() == set.samples.size());
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        CHECK(table.icustay_ids[i] == set.samples[i].icustay_id);
        CHECK(table.splits[i] == set.samples[i].split);
        REQUIRE(table.features[i].size() == set.samples[i].features.size());
        CHECK(std::memcmp(table.features[i].data(), set.samples[i].features.data(),
                          set.samples[i].features.size() * sizeof(double)) == 0);
        CHECK((table.labels[0][i] == "1") == set.samples[i].mort_icu);
        CHECK((table.labels[2][i] == "1") == set.samples[i].los3);
    }
}

TEST_CASE("dynamic samples round-trip with their labels and sidecar") {
    const World& w = world();
    const fs::path samples = w.dir.path / "samples_dynamic";
    run_prep_dynamic(w.dir.path / "extracted", samples, "vent", 7);

    const auto split = split_cohort(w.extracted.cohort.rows, SplitRatios{}, 7);
    const DynamicSampleSet set = build_dynamic_samples(
        w.extracted.grid, w.extracted.interventions, w.extracted.cohort.rows, split, "vent");

    const SampleTable table = read_sample_table(samples, "dynamic");
    CHECK(table.task == "dynamic");
    CHECK(table.target == "vent");
    CHECK(table.feature_names == set.feature_names);
    REQUIRE(table.features.size() == set.samples.size());
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        CHECK(table.icustay_ids[i] == set.samples[i].icustay_id);
        CHECK(table.labels[0][i] == class4_name(set.samples[i].label));
        CHECK(std::memcmp(table.features[i].data(), set.samples[i].features.data(),
                          set.samples[i].features.size() * sizeof(double)) == 0);
    }

    std::ifstream sidecar(samples / "samples_dynamic.json");
    nlohmann::json j;
    sidecar >> j;
    CHECK(j.at("target") == "vent");
    CHECK(j.at("input_hours").get<int>() == 6);
    CHECK(j.at("gap_hours").get<int>() == 6);
    CHECK(j.at("prediction_hours").get<int>() == 4);
    CHECK(j.at("sentinel").get<int>() == 7);
}

TEST_CASE("supplied predictions are scored against the stored labels") {
    const World& w = world();
    const fs::path samples = w.dir.path / "samples_fixed";
    if (!fs::exists(samples / "samples_fixed.csv")) run_prep_fixed(w.dir.path / "extracted", samples, 7);

    const SampleTable table = read_sample_table(samples, "fixed");
    const fs::path pred_csv = w.dir.path / "oracle_predictions.csv";
    {
        std::ofstream out(pred_csv);
        out << "icustay_id,score\n";
        std::size_t mort_col = 0;
        for (std::size_t c = 0; c < table.label_columns.size(); ++c)
            if (table.label_columns[c] == "mort_hosp") mort_col = c;
        for (std::size_t i = 0; i < table.icustay_ids.size(); ++i) {
            if (table.splits[i] != Split::test) continue;
            out << table.icustay_ids[i] << ","
                << (table.labels[mort_col][i] == "1" ? "0.9" : "0.1") << "\n";
        }
    }
    const EvalArtifacts art =
        run_eval_predictions(samples, pred_csv, w.dir.path / "eval_pred", "mort_hosp");
    CHECK(art.metrics.auroc == 1.0);
    CHECK(art.metrics.accuracy == 1.0);
    CHECK(fs::exists(w.dir.path / "eval_pred" / "metrics_mort_hosp.json"));

    // A prediction for an unknown stay is a hard error.
    {
        std::ofstream out(pred_csv, std::ios::app);
        out << "999999999,0.5\n";
    }
    CHECK_THROWS_AS(run_eval_predictions(samples, pred_csv, w.dir.path / "eval_pred", "mort_hosp"),
                    Error);
}

TEST_CASE("the trained baseline writes a complete metrics file") {
    const World& w = world();
    const fs::path samples = w.dir.path / "samples_fixed";
    if (!fs::exists(samples / "samples_fixed.csv")) run_prep_fixed(w.dir.path / "extracted", samples, 7);

    LogRegOptions opt;
    opt.epochs = 50;  // plenty for a smoke check
    const EvalArtifacts art = run_eval_fixed(samples, w.dir.path / "eval_lr", "mort_icu", opt);
    CHECK(art.task == "mort_icu");
    CHECK(art.n_train > 0);
    CHECK(art.n_test > 0);
    CHECK(art.metrics.auroc >= 0.0);
    CHECK(art.metrics.auroc <= 1.0);

    std::ifstream in(w.dir.path / "eval_lr" / "metrics_mort_icu.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j.at("task") == "mort_icu");
    CHECK(j.at("baseline") == "logreg");
    CHECK(j.at("test").at("auroc").get<double>() == art.metrics.auroc);
    CHECK(j.at("n_train").get<std::int64_t>() == art.n_train);

    CHECK_THROWS_AS(run_eval_fixed(samples, w.dir.path / "eval_lr", "bogus_task", opt), Error);
}

TEST_CASE("the cohort report partitions the cohort exactly") {
    const World& w = world();
    const CohortReport rep = run_report(w.dir.path / "extracted");
    CHECK(rep.cohort_size == static_cast<std::int64_t>(w.extracted.cohort.rows.size()));
    REQUIRE_FALSE(rep.tables.empty());
    for (const auto& t : rep.tables) {
        CHECK(t.total() == rep.cohort_size);
        for (std::size_t r = 0; r < t.row_levels.size(); ++r) {
            double pct = 0.0;
            for (std::size_t g = 0; g < t.gender_levels.size(); ++g) pct += t.row_percent(r, g);
            CHECK(pct == Catch::Approx(100.0).margin(0.2));
        }
    }
    CHECK_FALSE(rep.missingness.empty());

    const std::string text = render_cohort_report(rep);
    CHECK(text.find("age_bucket") != std::string::npos);
    CHECK(text.find("heart_rate") != std::string::npos);

    TempDir empty("ehrgrid_no_extract");
    CHECK_THROWS_AS(run_report(empty.path), Error);
}

TEST_CASE("config files merge with the documented precedence") {
    TempDir dir("ehrgrid_configfile");
    const fs::path cfg_path = dir.path / "extract.cfg";
    {
        std::ofstream out(cfg_path);
        out << "# comment line\n";
        out << "min_age = 18\n";
        out << "max_duration=120\n";
        out << "group_by_level2 = false\n";
    }
    ExtractConfig cfg;
    apply_config_file(cfg, cfg_path);
    CHECK(cfg.min_age == 18.0);
    CHECK(cfg.max_duration == 120.0);
    CHECK(cfg.min_duration == 12.0);  // untouched keys keep their defaults
    CHECK_FALSE(cfg.group_by_level2);

    {
        std::ofstream out(cfg_path);
        out << "min_age = fifteen\n";
    }
    ExtractConfig bad;
    CHECK_THROWS_AS(apply_config_file(bad, cfg_path), Error);

    {
        std::ofstream out(cfg_path);
        out << "unknown_key = 3\n";
    }
    ExtractConfig unknown;
    CHECK_THROWS_AS(apply_config_file(unknown, cfg_path), Error);
}

TEST_CASE("extraction can train a null-signal baseline without blowing up") {
    // The generated world has no planted outcome signal, so a quick train
    // run should land near chance on the test split rather than erroring.
    const World& w = world();
    const fs::path samples = w.dir.path / "samples_fixed";
    if (!fs::exists(samples / "samples_fixed.csv")) run_prep_fixed(w.dir.path / "extracted", samples, 7);
    LogRegOptions opt;
    opt.epochs = 20;
    const EvalArtifacts art = run_eval_fixed(samples, w.dir.path / "eval_null", "mort_hosp", opt);
    CHECK(art.metrics.auroc > 0.2);
    CHECK(art.metrics.auroc < 0.8);
}
