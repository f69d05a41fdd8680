#pragma once

#include <string>
#include <vector>

#include "affssl/data/datasets.hpp"
#include "affssl/model/model.hpp"

namespace affssl {

// Deterministic non-augmented preprocessing (resize + [0,1] range), frozen
// encoder. Row order matches dataset order.
struct FeatureSet {
    Tensor features;  // (n, d)
    std::vector<int> labels;
};

FeatureSet extract_features(nn::Net& encoder, const Dataset& data, int resolution,
                            int64_t batch_size = 256);

struct ProbeOptions {
    double l2 = 1.0;
    int max_iterations = 200;
    double grad_tol = 1e-5;
    bool standardize = true;
};

struct ProbeModel {
    Tensor weights;  // (classes, d+1), last column is the bias
    std::vector<double> feat_mean, feat_std;
    bool converged = false;
    int iterations = 0;
};

// Multinomial logistic regression, L2-regularized, minimized with L-BFGS
// (two-loop recursion, backtracking line search). Deterministic.
ProbeModel fit_linear_probe(const Tensor& features, const std::vector<int>& labels,
                            int num_classes, const ProbeOptions& opts = {});

std::vector<int> probe_predict(const ProbeModel& model, const Tensor& features);
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

struct ProbeResult {
    std::string dataset;
    int64_t epoch = -1;  // checkpoint epoch, -1 if unknown
    double mean_accuracy = 0.0;
    double ci_half_width = 0.0;  // 95%, Student-t with trials-1 dof
    bool degenerate_ci = false;  // single trial
    std::vector<double> trial_accuracies;
    std::vector<uint64_t> trial_seeds;
};

// 95% half-width via Student-t; n == 1 reports 0 with the degenerate flag.
double student_t_ci_half_width(const std::vector<double>& values);

struct EvalOptions {
    int trials = 5;
    double train_fraction = 0.9;  // per-trial subsample of probe training rows
    ProbeOptions probe;
    int resolution = 32;
    uint64_t seed = 1;
};

// Per-trial: subsample the probe training set with a trial-specific seed,
// fit, score on the eval split. The encoder is never updated.
ProbeResult evaluate_dataset(nn::Net& encoder, const Dataset& train, const Dataset& eval,
                             const EvalOptions& opts);

}  // namespace affssl
