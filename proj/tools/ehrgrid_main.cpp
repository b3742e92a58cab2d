#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "ehrgrid/pipeline.hpp"
#include "ehrgrid/report.hpp"

namespace {

std::string pct1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
    return buf;
}

void print_metrics(const ehrgrid::MetricsReport& m) {
    std::printf("  AUROC %s  AUPRC %s  accuracy %s  F1 %s  (threshold %g, %lld pos / %lld neg)\n",
                pct1(m.auroc).c_str(), pct1(m.auprc).c_str(), pct1(m.accuracy).c_str(),
                pct1(m.f1).c_str(), m.threshold, static_cast<long long>(m.n_pos),
                static_cast<long long>(m.n_neg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EHR hourly-grid extraction and benchmark toolkit"};
    app.require_subcommand(1);

    // --- gensynth ---
    auto* gen = app.add_subcommand("gensynth", "generate a synthetic source dataset + ground truth");
    ehrgrid::GenParams gen_params;
    std::string gen_out;
    gen->add_option("--out-dir", gen_out, "output directory")->required();
    gen->add_option("--subjects", gen_params.n_subjects, "number of subjects");
    gen->add_option("--seed", gen_params.seed, "generator seed");
    gen->add_option("--mortality-rate", gen_params.mortality_rate, "hospital mortality rate");
    gen->add_option("--signal-strength", gen_params.signal_strength,
                    "planted outcome signal, in between-patient sigmas");
    gen->add_option("--repeat-stay-fraction", gen_params.repeat_stay_fraction,
                    "subjects with a later second stay");
    gen->add_option("--unit-variant-fraction", gen_params.unit_variant_fraction,
                    "events charted in alternate units");
    gen->add_option("--lab-unkeyed-fraction", gen_params.lab_unkeyed_fraction,
                    "lab events written without a stay id");

    // --- extract ---
    auto* ext = app.add_subcommand("extract", "build cohort, hourly grid, and intervention tables");
    ehrgrid::ExtractConfig cfg;
    std::string ext_source, ext_resources, ext_out, ext_config;
    int threads = 1;
    ext->add_option("--source-dir", ext_source, "source CSV directory")->required();
    ext->add_option("--resources-dir", ext_resources, "itemid map + ranges directory")->required();
    ext->add_option("--out-dir", ext_out, "output directory")->required();
    ext->add_option("--config", ext_config, "key=value config file (flags override)");
    ext->add_option("--min-age", cfg.min_age, "minimum age at intime, years");
    ext->add_option("--min-duration", cfg.min_duration, "minimum stay length, hours (inclusive)");
    ext->add_option("--max-duration", cfg.max_duration, "maximum stay length, hours (exclusive)");
    ext->add_option("--group-by-level2", cfg.group_by_level2,
                    "aggregate itemids into clinical variables (false: raw itemid columns)");
    ext->add_option("--min-percent", cfg.min_percent,
                    "drop variables present in fewer than this percent of stay-hours");
    ext->add_option("--threads", threads, "worker threads for aggregation");

    // --- prep ---
    auto* prep = app.add_subcommand("prep", "assemble model-ready sample tables");
    std::string prep_extracted, prep_out, prep_task, prep_target = "vent";
    std::uint64_t prep_seed = 0;
    prep->add_option("--extracted-dir", prep_extracted, "directory written by extract")->required();
    prep->add_option("--out-dir", prep_out, "output directory")->required();
    prep->add_option("--task", prep_task, "fixed | dynamic")
        ->required()
        ->check(CLI::IsMember({"fixed", "dynamic"}));
    prep->add_option("--target", prep_target, "intervention column for the dynamic task");
    prep->add_option("--seed", prep_seed, "subject-split seed");

    // --- eval ---
    auto* ev = app.add_subcommand("eval", "train the built-in baseline or score external predictions");
    std::string eval_samples, eval_out, eval_task, eval_predictions, eval_baseline = "logreg";
    ehrgrid::LogRegOptions lropt;
    ev->add_option("--samples-dir", eval_samples, "directory written by prep")->required();
    ev->add_option("--out-dir", eval_out, "output directory for metrics JSON")->required();
    ev->add_option("--task", eval_task, "mort_icu | mort_hosp | los3 | los7 | dynamic")
        ->required()
        ->check(CLI::IsMember({"mort_icu", "mort_hosp", "los3", "los7", "dynamic"}));
    ev->add_option("--baseline", eval_baseline, "built-in model")->check(CLI::IsMember({"logreg"}));
    ev->add_option("--predictions", eval_predictions,
                   "CSV of (icustay_id, score); skips the baseline (fixed tasks only)");
    ev->add_option("--epochs", lropt.epochs, "baseline training epochs");
    ev->add_option("--lr", lropt.lr, "largest gradient step the baseline may take");
    ev->add_option("--l2", lropt.l2, "baseline ridge penalty");

    // --- report ---
    auto* rep = app.add_subcommand("report", "print the cohort summary and variable presence table");
    std::string rep_extracted, rep_out;
    rep->add_option("--extracted-dir", rep_extracted, "directory written by extract")->required();
    rep->add_option("--out", rep_out, "also write the report to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;  // usage mistakes are configuration errors
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (gen->parsed()) {
            const auto art = ehrgrid::run_gensynth(gen_params, gen_out);
            std::printf("gensynth: %lld stays (%lld selected), %lld events -> %s\n",
                        static_cast<long long>(art.n_stays),
                        static_cast<long long>(art.n_selected),
                        static_cast<long long>(art.n_events), gen_out.c_str());
        } else if (ext->parsed()) {
            if (!ext_config.empty()) {
                // File values fill in whatever the command line left unset;
                // explicit flags win.
                ehrgrid::ExtractConfig file_cfg;
                ehrgrid::apply_config_file(file_cfg, ext_config);
                if (ext->count("--min-age") == 0) cfg.min_age = file_cfg.min_age;
                if (ext->count("--min-duration") == 0) cfg.min_duration = file_cfg.min_duration;
                if (ext->count("--max-duration") == 0) cfg.max_duration = file_cfg.max_duration;
                if (ext->count("--group-by-level2") == 0)
                    cfg.group_by_level2 = file_cfg.group_by_level2;
                if (ext->count("--min-percent") == 0) cfg.min_percent = file_cfg.min_percent;
            }
            const auto art = ehrgrid::run_extract(ext_source, ext_resources, ext_out, cfg, threads);
            std::printf("extract: %lld of %lld stays selected, %zu variables kept -> %s\n",
                        static_cast<long long>(art.cohort.counts.n_selected),
                        static_cast<long long>(art.cohort.counts.n_stays),
                        art.grid.variables.size(), ext_out.c_str());
        } else if (prep->parsed()) {
            const auto art = prep_task == "fixed"
                                 ? ehrgrid::run_prep_fixed(prep_extracted, prep_out, prep_seed)
                                 : ehrgrid::run_prep_dynamic(prep_extracted, prep_out, prep_target,
                                                             prep_seed);
            std::printf("prep: %lld samples x %zu features -> %s\n",
                        static_cast<long long>(art.n_samples), art.n_features, prep_out.c_str());
        } else if (ev->parsed()) {
            ehrgrid::EvalArtifacts art;
            if (!eval_predictions.empty()) {
                if (eval_task == "dynamic")
                    throw ehrgrid::Error(ehrgrid::ErrorCode::bad_config,
                                         "--predictions applies to fixed tasks only");
                art = ehrgrid::run_eval_predictions(eval_samples, eval_predictions, eval_out,
                                                    eval_task);
                std::printf("eval %s on %lld externally scored rows:\n", eval_task.c_str(),
                            static_cast<long long>(art.n_test));
            } else if (eval_task == "dynamic") {
                art = ehrgrid::run_eval_dynamic(eval_samples, eval_out, lropt);
                std::printf("eval dynamic (%s): macro AUROC %s over %lld test windows\n",
                            art.task.c_str(), pct1(*art.macro_auroc).c_str(),
                            static_cast<long long>(art.n_test));
                std::printf("onset vs rest:\n");
            } else {
                art = ehrgrid::run_eval_fixed(eval_samples, eval_out, eval_task, lropt);
                std::printf("eval %s: trained on %lld, tested on %lld\n", eval_task.c_str(),
                            static_cast<long long>(art.n_train),
                            static_cast<long long>(art.n_test));
            }
            print_metrics(art.metrics);
        } else if (rep->parsed()) {
            const auto report = ehrgrid::run_report(rep_extracted);
            const std::string text = ehrgrid::render_cohort_report(report);
            std::fputs(text.c_str(), stdout);
            if (!rep_out.empty()) {
                std::ofstream out(rep_out, std::ios::binary);
                out << text;
            }
        }
    } catch (const ehrgrid::Error& e) {
        // what() already leads with the error-code name.
        std::fprintf(stderr, "ehrgrid %s: %s\n", stage.c_str(), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ehrgrid %s: internal error: %s\n", stage.c_str(), e.what());
        return 4;
    }
    return 0;
}
