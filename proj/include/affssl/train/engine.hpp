#pragma once

#include <optional>
#include <string>

#include "affssl/affine/module.hpp"
#include "affssl/data/augment.hpp"
#include "affssl/data/datasets.hpp"
#include "affssl/model/model.hpp"

namespace affssl {

struct OptimizerConfig {
    double lr = 0.03;
    double weight_decay = 4e-4;
    int64_t batch_size = 256;
    int64_t epochs = 100;
    double momentum = 0.9;
    int64_t warmup_epochs = 0;
    std::string schedule = "cosine";  // cosine | constant

    void validate() const;
};

struct LossHyper {
    double ntxent_temperature = 0.5;
    double barlow_lambda = 5e-3;
};

// base_lr * (1 + cos(pi * step / total)) / 2
double cosine_lr(int64_t step, int64_t total_steps, double base_lr);

struct MetricsRecord {
    int64_t epoch = 0;
    int64_t step = 0;  // global step
    double l_ssl = 0.0;
    double l_affine = 0.0;
    double total = 0.0;
    double lr = 0.0;
    uint64_t seed = 0;
    int64_t trial = 0;
};

// SGD with momentum; weight decay skipped for params flagged decay=false.
class Sgd {
public:
    void step(const std::vector<nn::Param*>& params, double lr, double momentum,
              double weight_decay);
    std::vector<Tensor>& buffers() { return buffers_; }

private:
    std::vector<Tensor> buffers_;
};

struct TrainRunConfig {
    NetworksConfig networks;
    AffineModuleConfig affine;
    AugmentationConfig augment;
    OptimizerConfig optimizer;
    LossHyper loss;
    uint64_t seed = 1;
    int64_t trial = 0;
    uint64_t config_hash = 0;  // embedded in checkpoints
    int64_t checkpoint_every = 1;  // epochs; periodic checkpoints also serve the eval curves
    std::string run_dir;
};

struct StepResult {
    double l_ssl = 0.0;
    double l_affine = 0.0;
    double total = 0.0;
};

// One optimization step on a pair of already-augmented views. The affine
// branch draws only from `affine_rng`.
StepResult train_step(Networks& nets, Sgd& opt, const ImageBatch& x1, const ImageBatch& x2,
                      const AffineModuleConfig& affine, const LossHyper& loss_hyper, double lr,
                      const OptimizerConfig& opt_cfg, Rng& affine_rng);

struct FitResult {
    std::string checkpoint_path;  // latest
    std::string metrics_path;
    int64_t steps_run = 0;
};

// Full training loop over `data`; resumable from the run_dir's latest
// checkpoint when `resume` is set.
FitResult fit(const TrainRunConfig& cfg, const Dataset& data, bool resume = false);

// Checkpoint container: params (online + targets), optimizer state, epoch,
// and the config hash it was produced under.
void save_checkpoint(const std::string& path, Networks& nets, Sgd& opt, int64_t epoch,
                     uint64_t config_hash);
// Networks must already be built with the matching architecture.
int64_t load_checkpoint(const std::string& path, Networks& nets, Sgd* opt,
                        uint64_t* config_hash = nullptr);

}  // namespace affssl
