#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affssl/eval/probe.hpp"
#include "affssl/train/engine.hpp"

namespace affssl {

struct DatasetSpec {
    std::string name = "cifar10";
    int64_t limit = 0;       // pretraining rows, 0 = all
    int64_t eval_limit = 0;  // probe-training rows per eval dataset, 0 = all
    int resolution = 32;

    void validate() const;
};

struct EvalSpec {
    int64_t cadence = 10;  // epochs between probe evaluations
    int trials = 5;
    std::vector<std::string> datasets{"cifar10"};
    double l2 = 1.0;
    int max_iterations = 200;
    double train_fraction = 0.9;

    void validate() const;
};

// Full description of one experiment; unknown JSON keys are rejected so
// typos fail loudly instead of silently using defaults.
struct ExperimentConfig {
    std::string method = "simclr";
    std::vector<uint64_t> seeds{1};
    DatasetSpec dataset;
    EncoderSpec encoder;
    HeadSpec projector{512, 128};
    HeadSpec predictor{512, 128};
    double ema_tau = 0.99;
    OptimizerConfig optimizer;
    LossHyper loss;
    AugmentationConfig augment;
    AffineModuleConfig affine;
    int64_t regressor_hidden = 512;
    EvalSpec eval;
    int64_t checkpoint_every = 1;
    std::string output_dir = "runs";
    std::string data_root = "data";

    void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical form: sorted keys, every field explicit, output_dir and
// data_root excluded so the hash identifies the experiment, not its paths.
nlohmann::json canonical_json(const ExperimentConfig& cfg);
uint64_t fnv1a64(const std::string& s);
uint64_t config_hash(const ExperimentConfig& cfg);

// Concrete per-seed training run derived from the experiment.
TrainRunConfig make_train_run_config(const ExperimentConfig& cfg, uint64_t seed, int64_t trial,
                                     const std::string& run_dir);

std::string aggregation_name(Aggregation a);
std::string affine_views_name(AffineViews v);
std::string affine_source_name(AffineSource s);
Aggregation parse_aggregation(const std::string& s);
AffineViews parse_affine_views(const std::string& s);
AffineSource parse_affine_source(const std::string& s);

}  // namespace affssl
