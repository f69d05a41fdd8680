#pragma once

#include "affssl/core/tensor.hpp"
#include "affssl/nn/nn.hpp"

namespace affssl::nn {

struct LossResult {
    double value = 0.0;
    Tensor g1;  // gradient w.r.t. first argument (empty if grads not requested)
    Tensor g2;  // gradient w.r.t. second argument
};

// SimCLR NT-Xent over 2N in-batch embeddings; 2N-2 negatives per anchor.
LossResult ntxent_loss(const Tensor& z1, const Tensor& z2, double temperature,
                       bool with_grads = true);

// One direction of the BYOL regression: mean over rows of 2 - 2 cos(p, z).
// Gradient flows only into p; z is treated as a stopped target (g2 stays
// zero-filled when grads are requested).
LossResult byol_loss(const Tensor& p_online, const Tensor& z_target, bool with_grads = true);

// Barlow Twins redundancy-reduction loss on batch-standardized embeddings.
LossResult barlow_twins_loss(const Tensor& z1, const Tensor& z2, double lambda_offdiag,
                             bool with_grads = true);

struct EmaState {
    double tau = 0.99;
};

// target <- tau * target + (1 - tau) * online, elementwise over all params.
void ema_update(Net& online, Net& target, const EmaState& state);

}  // namespace affssl::nn
