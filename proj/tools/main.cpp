#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "affssl/exp/runner.hpp"

namespace fs = std::filesystem;
using namespace affssl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRun = 4;

struct CommonFlags {
    std::string config_path;
    std::string profile;
    std::string data_root;
    std::string output_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool need_config) {
    auto* cfg = cmd->add_option("-c,--config", f.config_path, "experiment config JSON");
    auto* prof = cmd->add_option("-p,--profile", f.profile,
                                 "named profile (configs/<name>.json) instead of --config");
    if (need_config) {
        cfg->excludes(prof);
        prof->excludes(cfg);
    }
    cmd->add_option("--data-root", f.data_root, "override the config's data root");
    cmd->add_option("--output-dir", f.output_dir, "override the config's output dir");
    cmd->add_option("--seed", f.seed, "run only this seed")->each([&f](const std::string&) {
        f.seed_set = true;
    });
}

ExperimentConfig resolve_config(const CommonFlags& f) {
    std::string path = f.config_path;
    if (path.empty()) {
        if (f.profile.empty()) throw ConfigError("either --config or --profile is required");
        path = (fs::path("configs") / (f.profile + ".json")).string();
    }
    ExperimentConfig cfg = load_experiment_config(path);
    if (!f.data_root.empty()) cfg.data_root = f.data_root;
    if (!f.output_dir.empty()) cfg.output_dir = f.output_dir;
    if (f.seed_set) cfg.seeds = {f.seed};
    return cfg;
}

int report_outcomes(const std::vector<RunOutcome>& outcomes) {
    int failures = 0;
    for (const RunOutcome& o : outcomes) {
        if (o.skipped)
            std::cout << "skip  " << o.label << " seed=" << o.seed << " (" << o.dir << ")\n";
        else if (o.failed) {
            std::cout << "FAIL  " << o.label << " seed=" << o.seed << ": " << o.error << "\n";
            ++failures;
        } else
            std::cout << "done  " << o.label << " seed=" << o.seed << " (" << o.dir << ")\n";
    }
    return failures == 0 ? 0 : kExitRun;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised pretraining with an affine-prediction branch"};
    app.require_subcommand(1);

    CommonFlags run_f, grid_f, eval_f;
    std::string grid_spec, eval_run_dir, report_dir;
    bool resume = false, tables_only = false, curves_only = false;

    auto* run_cmd = app.add_subcommand("run", "train every seed of one experiment config");
    add_common(run_cmd, run_f, true);
    run_cmd->add_flag("--resume", resume, "resume from the latest checkpoint");

    auto* grid_cmd = app.add_subcommand("grid", "run a cartesian grid spec");
    grid_cmd->add_option("-s,--spec", grid_spec, "grid spec JSON ({base, axes})")->required();
    grid_cmd->add_option("--data-root", grid_f.data_root, "override the base config's data root");
    grid_cmd->add_option("--output-dir", grid_f.output_dir,
                         "override the base config's output dir");

    auto* eval_cmd = app.add_subcommand("eval", "probe an existing run's checkpoints");
    add_common(eval_cmd, eval_f, true);
    eval_cmd->add_option("--run-dir", eval_run_dir, "directory holding the checkpoints")
        ->required();

    auto* report_cmd = app.add_subcommand("report", "render tables and curves from a result store");
    report_cmd->add_option("--output-dir", report_dir, "result store directory")->required();
    report_cmd->add_flag("--tables", tables_only, "render only the tables");
    report_cmd->add_flag("--curves", curves_only, "render only the curves");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const ExperimentConfig cfg = resolve_config(run_f);
            std::vector<RunOutcome> outcomes;
            for (uint64_t seed : cfg.seeds) {
                GridCell cell;
                cell.config = cfg;
                cell.config.seeds = {seed};
                cell.seed = seed;
                cell.label = variant_label(cfg);
                cell.dir = (fs::path(cfg.output_dir) / cell_dir_name(cell.config, seed)).string();
                outcomes.push_back(run_cell(cell, resume));
            }
            return report_outcomes(outcomes);
        }
        if (grid_cmd->parsed()) {
            std::ifstream in(grid_spec);
            if (!in) throw ConfigError("cannot open grid spec " + grid_spec);
            nlohmann::json spec;
            try {
                in >> spec;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("invalid grid spec JSON: " + std::string(e.what()));
            }
            if (!grid_f.data_root.empty()) spec["base"]["data_root"] = grid_f.data_root;
            if (!grid_f.output_dir.empty()) spec["base"]["output_dir"] = grid_f.output_dir;
            return report_outcomes(run_grid(spec));
        }
        if (eval_cmd->parsed()) {
            const ExperimentConfig cfg = resolve_config(eval_f);
            const uint64_t seed = eval_f.seed_set ? eval_f.seed : cfg.seeds.front();
            const auto results = evaluate_run(cfg, eval_run_dir, seed);
            for (const ProbeResult& r : results)
                std::cout << r.dataset << " epoch " << r.epoch << ": " << r.mean_accuracy
                          << " +/- " << r.ci_half_width << "\n";
            return 0;
        }
        if (report_cmd->parsed()) {
            if (!curves_only || tables_only) render_tables(report_dir);
            if (!tables_only || curves_only) render_curves(report_dir);
            std::cout << "report written to " << (fs::path(report_dir) / "report").string()
                      << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IngestionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "run error: " << e.what() << "\n";
        return kExitRun;
    }
    return 0;
}
