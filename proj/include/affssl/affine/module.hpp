#pragma once

#include <vector>

#include "affssl/core/image.hpp"
#include "affssl/geometry/affine.hpp"
#include "affssl/model/model.hpp"
#include "affssl/nn/nn.hpp"

namespace affssl {

enum class Aggregation { kDifference, kConcatenation };
enum class AffineViews { kOne, kBoth };

struct AffineModuleConfig {
    bool enabled = true;
    Aggregation aggregation = Aggregation::kDifference;
    AffineViews views = AffineViews::kOne;
    AffineSource source = AffineSource::kEncoder;
    ComponentMask mask = ComponentMask::all();
    AffineRanges ranges = AffineRanges::paper();
    double beta1 = 1.0;
    double beta2 = 1.0;
    bool normalize_targets = true;
    bool bounded = false;  // crop the maximal inscribed rectangle, no zero fill

    void validate() const;
    int target_dim() const { return mask.active_dim(); }
};

// Transition vector: h - ha (difference, "affine back to original" order) or
// [h || ha] (concatenation).
Tensor aggregate(const Tensor& h, const Tensor& ha, Aggregation mode);

// Splits a gradient w.r.t. the transition vector into (gh, gha).
void aggregate_backward(const Tensor& gt, Aggregation mode, Tensor& gh, Tensor& gha);

// Forward through the regressor head; output dim equals the number of
// active scalar affine parameters.
Tensor predict_phi(const Tensor& transition, nn::Net& regressor, nn::NetCache* cache = nullptr);

// Mean over batch and components of squared error. Rows of phi_true hold raw
// active-component values (ordering [theta, tx, ty, sigma, sx, sy] restricted
// to the mask); with `normalize` they are mapped to [-1,1] first. phi_pred is
// always interpreted in the target space. grad_pred, when non-null, receives
// dL/dpred.
double affine_loss(const Tensor& phi_true, const Tensor& phi_pred, bool normalize,
                   const ComponentMask& mask, const AffineRanges& ranges,
                   Tensor* grad_pred = nullptr);

// beta1 * l_ssl + beta2 * l_affine, l_affine averaged over provided views.
double combined_loss(double l_ssl, double l_affine_view1, const double* l_affine_view2,
                     const AffineModuleConfig& cfg);

// Sampled transform + warped batch + regression targets for one view.
struct AffineBranchInput {
    ImageBatch warped;               // encoder input (bounded crop applied if set)
    Tensor targets;                  // (n, active_dim) raw active-component values
    std::vector<AffineParams> params;
};

AffineBranchInput prepare_affine_branch(const ImageBatch& view, const AffineModuleConfig& cfg,
                                        Rng& rng);

// Full branch on an already-prepared input: encode, aggregate, regress, MSE.
// Pure inference path (see training_engine for the gradient path).
struct AffineBranchResult {
    double loss = 0.0;
    Tensor transition;
    Tensor prediction;
};

AffineBranchResult affine_branch(Networks& nets, const Tensor& h_or_z,
                                 const AffineBranchInput& input, const AffineModuleConfig& cfg);

inline int64_t mlp_param_count(int64_t in, int64_t hidden, int64_t out) {
    return in * hidden + hidden + hidden * out + out;
}

}  // namespace affssl
