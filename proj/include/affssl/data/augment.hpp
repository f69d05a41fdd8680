#pragma once

#include <utility>

#include "affssl/core/image.hpp"
#include "affssl/core/rng.hpp"

namespace affssl {

struct AugmentationConfig {
    int resolution = 32;  // views are square at this size

    bool crop_enabled = true;
    double crop_scale_lo = 0.2;
    double crop_scale_hi = 1.0;

    bool flip_enabled = true;
    double flip_prob = 0.5;

    // SimCLR-standard jitter strengths
    bool jitter_enabled = true;
    double jitter_prob = 0.8;
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double hue = 0.1;

    bool grayscale_enabled = true;
    double grayscale_prob = 0.2;

    bool blur_enabled = true;
    double blur_prob = 0.5;
    double blur_sigma_lo = 0.1;
    double blur_sigma_hi = 2.0;

    void validate() const;
    static AugmentationConfig disabled(int resolution);
};

// One stochastic augmentation of every element; per-element randomness is
// derived from `rng` so elements are independent.
ImageBatch augment_batch(const ImageBatch& img, const AugmentationConfig& cfg, Rng& rng);

// Two independently augmented views of the batch.
std::pair<ImageBatch, ImageBatch> make_views(const ImageBatch& img, const AugmentationConfig& cfg,
                                             Rng& rng);

}  // namespace affssl
