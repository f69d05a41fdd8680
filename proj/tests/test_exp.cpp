#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "affssl/exp/runner.hpp"
#include "support/synth_data.hpp"

using namespace affssl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("affssl_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json tiny_experiment(const std::string& data_root, const std::string& output_dir) {
    return json{
        {"method", "simclr"},
        {"seeds", {1}},
        {"dataset", {{"name", "cifar10"}, {"limit", 64}, {"eval_limit", 40}, {"resolution", 32}}},
        {"encoder", {{"arch", "conv4"}, {"dim", 8}, {"width", 4}}},
        {"projector", {{"hidden", 16}, {"out", 8}}},
        {"optimizer",
         {{"lr", 0.05}, {"batch_size", 16}, {"epochs", 1}, {"schedule", "cosine"}}},
        {"augment", {{"blur_enabled", false}}},
        {"regressor_hidden", 16},
        {"eval",
         {{"cadence", 1}, {"trials", 2}, {"datasets", {"cifar10"}}, {"max_iterations", 30}}},
        {"output_dir", output_dir},
        {"data_root", data_root}};
}

}  // namespace

TEST_CASE("defaults, validation and unknown-key rejection") {
    ExperimentConfig cfg = parse_experiment_config(json{{"method", "byol"}});
    CHECK(cfg.method == "byol");
    CHECK(cfg.optimizer.lr == 0.03);
    CHECK(cfg.eval.cadence == 10);
    CHECK(cfg.affine.enabled);

    CHECK_THROWS_AS(parse_experiment_config(json{{"methodd", "byol"}}), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"optimizer", {{"lrr", 0.1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"affine", {{"beta3", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"method", "unknown"}}), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"seeds", json::array()}}), ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(json{{"affine", {{"components", {"rotation", "warp"}}}}}),
        ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(json{{"eval", {{"trials", 0}}}}), ConfigError);
}

TEST_CASE("config hash: semantic changes only") {
    json base{{"method", "simclr"}};
    const ExperimentConfig a = parse_experiment_config(base);
    const ExperimentConfig b = parse_experiment_config(base);
    CHECK(config_hash(a) == config_hash(b));

    json changed = base;
    changed["optimizer"] = {{"lr", 0.04}};
    CHECK(config_hash(parse_experiment_config(changed)) != config_hash(a));

    // paths are excluded: moving outputs must not invalidate cells
    json moved = base;
    moved["output_dir"] = "elsewhere";
    moved["data_root"] = "/other";
    CHECK(config_hash(parse_experiment_config(moved)) == config_hash(a));

    json masked = base;
    masked["affine"] = {{"components", {"rotation"}}};
    CHECK(config_hash(parse_experiment_config(masked)) != config_hash(a));
}

TEST_CASE("golden paper profile") {
    const ExperimentConfig cfg =
        load_experiment_config(std::string(AFFSSL_SOURCE_DIR) + "/configs/paper.json");
    CHECK(cfg.optimizer.lr == 0.03);
    CHECK(cfg.optimizer.weight_decay == 4e-4);
    CHECK(cfg.optimizer.batch_size == 256);
    CHECK(cfg.optimizer.epochs == 100);
    CHECK(cfg.projector.hidden == 512);
    CHECK(cfg.projector.out == 128);
    CHECK(cfg.regressor_hidden == 512);
    CHECK(cfg.affine.target_dim() == 6);
    CHECK(cfg.affine.ranges.theta.lo == -90.0);
    CHECK(cfg.affine.ranges.theta.hi == 90.0);
    CHECK(cfg.affine.ranges.translation.lo == 0.0);
    CHECK(cfg.affine.ranges.translation.hi == 0.25);
    CHECK(cfg.affine.ranges.sigma.lo == 0.7);
    CHECK(cfg.affine.ranges.sigma.hi == 1.3);
    CHECK(cfg.affine.ranges.shear.lo == -25.0);
    CHECK(cfg.affine.ranges.shear.hi == 25.0);
    CHECK(cfg.eval.cadence == 10);
    CHECK(cfg.eval.trials == 5);
    CHECK(cfg.encoder.arch == "resnet50");
    CHECK(cfg.encoder.dim == 2048);

    const ExperimentConfig smoke =
        load_experiment_config(std::string(AFFSSL_SOURCE_DIR) + "/configs/smoke.json");
    CHECK(smoke.dataset.limit == 2000);
    CHECK(smoke.optimizer.epochs == 5);
    CHECK(smoke.optimizer.batch_size == 64);
    CHECK(smoke.seeds.size() == 2);
}

TEST_CASE("variant labels") {
    ExperimentConfig cfg = parse_experiment_config(json{{"method", "simclr"}});
    CHECK(variant_label(cfg) == "affine");
    cfg.affine.enabled = false;
    CHECK(variant_label(cfg) == "baseline");
    cfg.affine.enabled = true;
    cfg.affine.bounded = true;
    cfg.affine.views = AffineViews::kBoth;
    CHECK(variant_label(cfg) == "affine+bothviews+bounded");
    cfg = parse_experiment_config(json{{"affine", {{"components", {"rotation"}}}}});
    CHECK(variant_label(cfg) == "affine:rotation");
}

TEST_CASE("grid expansion") {
    json grid{{"base", json{{"method", "simclr"}}},
              {"axes",
               {{"method", {"simclr", "byol", "barlow_twins"}},
                {"variant", {"baseline", "affine"}},
                {"seed", {1}}}}};
    const auto cells = expand_grid(grid);
    CHECK(cells.size() == 6);
    int baselines = 0;
    for (const GridCell& c : cells)
        if (c.label == "baseline") ++baselines;
    CHECK(baselines == 3);

    json comp_grid{{"base", json{{"method", "simclr"}}},
                   {"axes",
                    {{"components",
                      {json::array({"rotation"}), json::array({"translation"}),
                       json::array({"scale"}), json::array({"shear"})}}}}};
    CHECK(expand_grid(comp_grid).size() == 4);

    json bad{{"base", json{{"method", "simclr"}}}, {"axes", {{"beta2", {0.0, 1.0}}}}};
    CHECK_THROWS_AS(expand_grid(bad), ConfigError);

    // cell hashes are distinct across the grid
    const auto six = expand_grid(grid);
    std::set<std::string> dirs;
    for (const GridCell& c : six) dirs.insert(c.dir);
    CHECK(dirs.size() == six.size());
}

TEST_CASE("grid runs, is idempotent, and reports render") {
    TempDir data("exp_data"), out("exp_out");
    testsupport::write_synthetic_cifar10(data.path.string(), 120, 40);

    json grid{{"base", tiny_experiment(data.path.string(), out.path.string())},
              {"axes", {{"variant", {"baseline", "affine"}}}}};

    auto outcomes = run_grid(grid);
    REQUIRE(outcomes.size() == 2);
    for (const RunOutcome& o : outcomes) {
        CAPTURE(o.error);
        CHECK(!o.failed);
        CHECK(!o.skipped);
        CHECK(fs::exists(fs::path(o.dir) / "metrics.ndjson"));
        CHECK(fs::exists(fs::path(o.dir) / "eval.ndjson"));
        CHECK(fs::exists(fs::path(o.dir) / "DONE"));
    }

    // re-run: all cells skipped
    auto again = run_grid(grid);
    for (const RunOutcome& o : again) CHECK(o.skipped);

    const auto results = collect_results(out.path.string());
    CHECK(results.size() == 2);  // 2 variants x 1 dataset x final epoch
    for (const CellSummary& s : results) {
        CHECK(s.mean >= 0.0);
        CHECK(s.mean <= 1.0);
        CHECK(s.seed_means.size() == 1);
    }

    render_tables(out.path.string());
    render_curves(out.path.string());
    CHECK(fs::exists(out.path / "report" / "tables.md"));
    CHECK(fs::exists(out.path / "report" / "tables.json"));
    CHECK(fs::exists(out.path / "report" / "series.json"));
    CHECK(fs::exists(out.path / "report" / "curve_simclr_cifar10.svg"));

    // exported series round-trips the stored records exactly
    std::ifstream sf((out.path / "report" / "series.json").string());
    json series;
    sf >> series;
    REQUIRE(series.size() == 2);
    for (const json& s : series) {
        const std::string label = s.at("variant").get<std::string>();
        bool matched = false;
        for (const CellSummary& c : results)
            if (c.label == label) {
                matched = true;
                REQUIRE(s.at("means").size() == 1);
                CHECK(s.at("means").at(0).get<double>() == c.mean);
                CHECK(s.at("cis").at(0).get<double>() == c.ci);
                CHECK(s.at("epochs").at(0).get<int64_t>() == c.epoch);
            }
        CHECK(matched);
    }
}

TEST_CASE("cell failures are isolated") {
    TempDir data("exp_faildata"), out("exp_failout");
    // no dataset files on disk: the training data load fails per cell
    json grid{{"base", tiny_experiment(data.path.string(), out.path.string())},
              {"axes", {{"variant", {"baseline", "affine"}}}}};
    const auto outcomes = run_grid(grid);
    REQUIRE(outcomes.size() == 2);
    for (const RunOutcome& o : outcomes) {
        CHECK(o.failed);
        CHECK(!o.error.empty());
        CHECK(fs::exists(fs::path(o.dir) / "error.json"));
        CHECK(!fs::exists(fs::path(o.dir) / "DONE"));
    }
}
