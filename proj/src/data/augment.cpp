#include "affssl/data/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "affssl/geometry/warp.hpp"

namespace affssl {

void AugmentationConfig::validate() const {
    if (resolution < 1) throw ConfigError("AugmentationConfig: resolution must be >= 1");
    auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob_ok(flip_prob) || !prob_ok(jitter_prob) || !prob_ok(grayscale_prob) ||
        !prob_ok(blur_prob))
        throw ConfigError("AugmentationConfig: probabilities must be in [0,1]");
    if (!(crop_scale_lo > 0.0) || crop_scale_lo > crop_scale_hi || crop_scale_hi > 1.0)
        throw ConfigError("AugmentationConfig: crop scale range must be within (0,1]");
    if (blur_sigma_lo <= 0.0 || blur_sigma_lo > blur_sigma_hi)
        throw ConfigError("AugmentationConfig: invalid blur sigma range");
}

AugmentationConfig AugmentationConfig::disabled(int resolution) {
    AugmentationConfig cfg;
    cfg.resolution = resolution;
    cfg.crop_enabled = false;
    cfg.flip_enabled = false;
    cfg.jitter_enabled = false;
    cfg.grayscale_enabled = false;
    cfg.blur_enabled = false;
    return cfg;
}

namespace {

// All helpers operate on a single-image batch (n = 1).

ImageBatch random_resized_crop(const ImageBatch& img, const AugmentationConfig& cfg, Rng& rng) {
    const double h = static_cast<double>(img.height());
    const double w = static_cast<double>(img.width());
    const double area = h * w;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * uniform(rng, cfg.crop_scale_lo, cfg.crop_scale_hi);
        const double log_ratio = uniform(rng, std::log(3.0 / 4.0), std::log(4.0 / 3.0));
        const double ratio = std::exp(log_ratio);
        const double cw = std::sqrt(target * ratio);
        const double ch = std::sqrt(target / ratio);
        if (cw > w || ch > h) continue;
        const double x0 = uniform(rng, 0.0, w - cw) - 0.5;
        const double y0 = uniform(rng, 0.0, h - ch) - 0.5;
        return crop_resize(img, {x0, y0, x0 + cw, y0 + ch}, cfg.resolution, cfg.resolution);
    }
    // fallback: center crop of the largest valid square
    const double side = std::min(h, w);
    const double x0 = 0.5 * (w - side) - 0.5, y0 = 0.5 * (h - side) - 0.5;
    return crop_resize(img, {x0, y0, x0 + side, y0 + side}, cfg.resolution, cfg.resolution);
}

void hflip(ImageBatch& img) {
    const int64_t w = img.width();
    for (int64_t ch = 0; ch < img.channels(); ++ch)
        for (int64_t y = 0; y < img.height(); ++y)
            for (int64_t x = 0; x < w / 2; ++x)
                std::swap(img.at(0, ch, y, x), img.at(0, ch, y, w - 1 - x));
}

double luma(const ImageBatch& img, int64_t y, int64_t x) {
    if (img.channels() < 3) return img.at(0, 0, y, x);
    return 0.299 * img.at(0, 0, y, x) + 0.587 * img.at(0, 1, y, x) + 0.114 * img.at(0, 2, y, x);
}

void adjust_brightness(ImageBatch& img, double factor) {
    for (auto& v : img.data.vec()) v *= factor;
}

void adjust_contrast(ImageBatch& img, double factor) {
    double mean = 0.0;
    for (int64_t y = 0; y < img.height(); ++y)
        for (int64_t x = 0; x < img.width(); ++x) mean += luma(img, y, x);
    mean /= static_cast<double>(img.height() * img.width());
    for (auto& v : img.data.vec()) v = mean + (v - mean) * factor;
}

void adjust_saturation(ImageBatch& img, double factor) {
    if (img.channels() < 3) return;
    for (int64_t y = 0; y < img.height(); ++y)
        for (int64_t x = 0; x < img.width(); ++x) {
            const double g = luma(img, y, x);
            for (int64_t ch = 0; ch < 3; ++ch)
                img.at(0, ch, y, x) = g + (img.at(0, ch, y, x) - g) * factor;
        }
}

// hue shift as a rotation in the YIQ chroma plane; `shift` in turns of the
// full circle
void adjust_hue(ImageBatch& img, double shift) {
    if (img.channels() < 3) return;
    const double a = shift * 2.0 * M_PI;
    const double ca = std::cos(a), sa = std::sin(a);
    for (int64_t y = 0; y < img.height(); ++y)
        for (int64_t x = 0; x < img.width(); ++x) {
            const double r = img.at(0, 0, y, x), g = img.at(0, 1, y, x), b = img.at(0, 2, y, x);
            const double Y = 0.299 * r + 0.587 * g + 0.114 * b;
            const double I = 0.596 * r - 0.274 * g - 0.322 * b;
            const double Q = 0.211 * r - 0.523 * g + 0.312 * b;
            const double I2 = I * ca - Q * sa;
            const double Q2 = I * sa + Q * ca;
            img.at(0, 0, y, x) = Y + 0.956 * I2 + 0.621 * Q2;
            img.at(0, 1, y, x) = Y - 0.272 * I2 - 0.647 * Q2;
            img.at(0, 2, y, x) = Y - 1.106 * I2 + 1.703 * Q2;
        }
}

void color_jitter(ImageBatch& img, const AugmentationConfig& cfg, Rng& rng) {
    std::array<int, 4> order = {0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng);
    const double fb = uniform(rng, std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness);
    const double fc = uniform(rng, std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast);
    const double fs = uniform(rng, std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation);
    const double fh = uniform(rng, -cfg.hue, cfg.hue);
    for (int op : order) {
        switch (op) {
            case 0: adjust_brightness(img, fb); break;
            case 1: adjust_contrast(img, fc); break;
            case 2: adjust_saturation(img, fs); break;
            case 3: adjust_hue(img, fh); break;
        }
    }
}

void to_grayscale(ImageBatch& img) {
    if (img.channels() < 3) return;
    for (int64_t y = 0; y < img.height(); ++y)
        for (int64_t x = 0; x < img.width(); ++x) {
            const double g = luma(img, y, x);
            for (int64_t ch = 0; ch < 3; ++ch) img.at(0, ch, y, x) = g;
        }
}

void gaussian_blur(ImageBatch& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[static_cast<size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= sum;

    const int64_t h = img.height(), w = img.width();
    std::vector<double> tmp(static_cast<size_t>(h * w));
    for (int64_t ch = 0; ch < img.channels(); ++ch) {
        // horizontal pass with edge clamping
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int64_t sx = std::clamp<int64_t>(x + i, 0, w - 1);
                    acc += kernel[static_cast<size_t>(i + radius)] * img.at(0, ch, y, sx);
                }
                tmp[static_cast<size_t>(y * w + x)] = acc;
            }
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int64_t sy = std::clamp<int64_t>(y + i, 0, h - 1);
                    acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(sy * w + x)];
                }
                img.at(0, ch, y, x) = acc;
            }
    }
}

ImageBatch augment_one(const ImageBatch& img, const AugmentationConfig& cfg, Rng& rng) {
    ImageBatch out = cfg.crop_enabled ? random_resized_crop(img, cfg, rng)
                                      : resize_bilinear(img, cfg.resolution, cfg.resolution);
    if (cfg.flip_enabled && uniform(rng, 0.0, 1.0) < cfg.flip_prob) hflip(out);
    if (cfg.jitter_enabled && uniform(rng, 0.0, 1.0) < cfg.jitter_prob)
        color_jitter(out, cfg, rng);
    if (cfg.grayscale_enabled && uniform(rng, 0.0, 1.0) < cfg.grayscale_prob) to_grayscale(out);
    if (cfg.blur_enabled && uniform(rng, 0.0, 1.0) < cfg.blur_prob)
        gaussian_blur(out, uniform(rng, cfg.blur_sigma_lo, cfg.blur_sigma_hi));
    for (auto& v : out.data.vec()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

ImageBatch slice(const ImageBatch& img, int64_t i) {
    ImageBatch one(1, img.channels(), img.height(), img.width());
    const int64_t sz = img.channels() * img.height() * img.width();
    std::copy(img.data.data() + i * sz, img.data.data() + (i + 1) * sz, one.data.data());
    if (static_cast<size_t>(i) < img.ids.size()) one.ids = {img.ids[static_cast<size_t>(i)]};
    return one;
}

}  // namespace

ImageBatch augment_batch(const ImageBatch& img, const AugmentationConfig& cfg, Rng& rng) {
    img.check_nonempty();
    cfg.validate();
    ImageBatch out(img.n(), img.channels(), cfg.resolution, cfg.resolution);
    out.ids = img.ids;
    const int64_t sz = img.channels() * cfg.resolution * cfg.resolution;
    for (int64_t i = 0; i < img.n(); ++i) {
        Rng elem = make_rng({rng(), static_cast<uint64_t>(i)});
        ImageBatch one = augment_one(slice(img, i), cfg, elem);
        std::copy(one.data.data(), one.data.data() + sz, out.data.data() + i * sz);
    }
    return out;
}

std::pair<ImageBatch, ImageBatch> make_views(const ImageBatch& img, const AugmentationConfig& cfg,
                                             Rng& rng) {
    ImageBatch x1 = augment_batch(img, cfg, rng);
    ImageBatch x2 = augment_batch(img, cfg, rng);
    return {std::move(x1), std::move(x2)};
}

}  // namespace affssl
