#include "affssl/affine/module.hpp"

#include <cmath>

#include "affssl/geometry/warp.hpp"

namespace affssl {

void AffineModuleConfig::validate() const {
    mask.validate();
    ranges.validate();
    if (beta1 < 0.0 || beta2 < 0.0) throw ConfigError("AffineModuleConfig: betas must be >= 0");
    if (beta1 == 0.0 && beta2 == 0.0)
        throw ConfigError("AffineModuleConfig: beta1 and beta2 cannot both be 0");
}

Tensor aggregate(const Tensor& h, const Tensor& ha, Aggregation mode) {
    if (h.rank() != 2 || !h.same_shape(ha))
        throw ContractError("aggregate: h and ha must be equal-shape (batch, d)");
    const int64_t n = h.dim(0), d = h.dim(1);
    if (mode == Aggregation::kDifference) {
        Tensor t = h;
        t -= ha;
        return t;
    }
    Tensor t({n, 2 * d});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(h.data() + i * d, h.data() + (i + 1) * d, t.data() + i * 2 * d);
        std::copy(ha.data() + i * d, ha.data() + (i + 1) * d, t.data() + i * 2 * d + d);
    }
    return t;
}

void aggregate_backward(const Tensor& gt, Aggregation mode, Tensor& gh, Tensor& gha) {
    const int64_t n = gt.dim(0);
    if (mode == Aggregation::kDifference) {
        gh = gt;
        gha = gt;
        gha *= -1.0;
        return;
    }
    const int64_t d = gt.dim(1) / 2;
    gh = Tensor({n, d});
    gha = Tensor({n, d});
    for (int64_t i = 0; i < n; ++i) {
        std::copy(gt.data() + i * 2 * d, gt.data() + i * 2 * d + d, gh.data() + i * d);
        std::copy(gt.data() + i * 2 * d + d, gt.data() + (i + 1) * 2 * d, gha.data() + i * d);
    }
}

Tensor predict_phi(const Tensor& transition, nn::Net& regressor, nn::NetCache* cache) {
    return regressor.forward(transition, cache);
}

double affine_loss(const Tensor& phi_true, const Tensor& phi_pred, bool normalize,
                   const ComponentMask& mask, const AffineRanges& ranges, Tensor* grad_pred) {
    if (!phi_true.same_shape(phi_pred) || phi_true.rank() != 2)
        throw ContractError("affine_loss: shape mismatch between targets and predictions");
    const int64_t n = phi_true.dim(0), c = phi_true.dim(1);
    if (c != mask.active_dim()) throw ContractError("affine_loss: column count does not match mask");
    for (int64_t i = 0; i < phi_true.numel(); ++i)
        if (std::isnan(phi_true[i]) || std::isnan(phi_pred[i]))
            throw NumericError("affine_loss: NaN input");

    if (grad_pred) *grad_pred = Tensor({n, c});
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(n * c);
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> target(static_cast<size_t>(c));
        if (normalize) {
            // reconstruct the active-component params then map to [-1,1]
            std::vector<double> raw(phi_true.data() + i * c, phi_true.data() + (i + 1) * c);
            AffineParams p = AffineParams::identity();
            size_t j = 0;
            if (mask.use_rotation) p.theta = raw[j++];
            if (mask.use_translation) {
                p.tx = raw[j++];
                p.ty = raw[j++];
            }
            if (mask.use_scale) p.sigma = raw[j++];
            if (mask.use_shear) {
                p.sx = raw[j++];
                p.sy = raw[j++];
            }
            target = normalize_params(p, mask, ranges);
        } else {
            std::copy(phi_true.data() + i * c, phi_true.data() + (i + 1) * c, target.begin());
        }
        for (int64_t k = 0; k < c; ++k) {
            const double diff = phi_pred[i * c + k] - target[static_cast<size_t>(k)];
            loss += diff * diff * scale;
            if (grad_pred) (*grad_pred)[i * c + k] = 2.0 * diff * scale;
        }
    }
    return loss;
}

double combined_loss(double l_ssl, double l_affine_view1, const double* l_affine_view2,
                     const AffineModuleConfig& cfg) {
    if (!std::isfinite(l_ssl) || !std::isfinite(l_affine_view1) ||
        (l_affine_view2 && !std::isfinite(*l_affine_view2)))
        throw NumericError("combined_loss: non-finite loss input");
    double l_aff = l_affine_view1;
    if (l_affine_view2) l_aff = 0.5 * (l_affine_view1 + *l_affine_view2);
    return cfg.beta1 * l_ssl + cfg.beta2 * l_aff;
}

AffineBranchInput prepare_affine_branch(const ImageBatch& view, const AffineModuleConfig& cfg,
                                        Rng& rng) {
    view.check_nonempty();
    cfg.validate();
    const int64_t n = view.n();
    const int w = static_cast<int>(view.width()), h = static_cast<int>(view.height());
    const int c = cfg.target_dim();

    AffineBranchInput out;
    out.warped = ImageBatch(n, view.channels(), h, w);
    out.warped.ids = view.ids;
    out.targets = Tensor({n, c});
    out.params.reserve(static_cast<size_t>(n));

    const int64_t sz = view.channels() * h * w;
    for (int64_t i = 0; i < n; ++i) {
        // phi sampled per batch element
        const AffineParams p = sample_affine_params(rng, cfg.mask, cfg.ranges);
        out.params.push_back(p);
        const AffineMatrix m = build_matrix(p, w, h);

        ImageBatch one(1, view.channels(), h, w);
        std::copy(view.data.data() + i * sz, view.data.data() + (i + 1) * sz, one.data.data());
        ImageBatch warped = warp_image(one, m);
        if (cfg.bounded) {
            const Quad fp = footprint_polygon(m, w, h);
            // intersect with the image bounds so the crop also avoids the
            // parts of the footprint that were pushed off-frame
            BoundedCropRect r = max_inscribed_rect(fp);
            r.x0 = std::max(r.x0, -0.5);
            r.y0 = std::max(r.y0, -0.5);
            r.x1 = std::min(r.x1, w - 0.5);
            r.y1 = std::min(r.y1, h - 0.5);
            if (r.x1 <= r.x0 || r.y1 <= r.y0)
                throw NumericError("prepare_affine_branch: empty bounded crop");
            warped = crop_resize(warped, r, h, w);
        }
        std::copy(warped.data.data(), warped.data.data() + sz, out.warped.data.data() + i * sz);

        // raw active-component targets, same ordering as normalize_params
        size_t j = 0;
        std::vector<double> raw(static_cast<size_t>(c));
        if (cfg.mask.use_rotation) raw[j++] = p.theta;
        if (cfg.mask.use_translation) {
            raw[j++] = p.tx;
            raw[j++] = p.ty;
        }
        if (cfg.mask.use_scale) raw[j++] = p.sigma;
        if (cfg.mask.use_shear) {
            raw[j++] = p.sx;
            raw[j++] = p.sy;
        }
        std::copy(raw.begin(), raw.end(), out.targets.data() + i * c);
    }
    return out;
}

AffineBranchResult affine_branch(Networks& nets, const Tensor& h_or_z,
                                 const AffineBranchInput& input, const AffineModuleConfig& cfg) {
    if (!nets.has_regressor()) throw ContractError("affine_branch: networks have no regressor head");
    Tensor ha = nets.encoder.forward(image_to_tensor(input.warped), nullptr);
    if (cfg.source == AffineSource::kProjector) ha = nets.projector.forward(ha, nullptr);
    AffineBranchResult res;
    res.transition = aggregate(h_or_z, ha, cfg.aggregation);
    res.prediction = predict_phi(res.transition, nets.regressor);
    res.loss = affine_loss(input.targets, res.prediction, cfg.normalize_targets, cfg.mask,
                           cfg.ranges);
    return res;
}

}  // namespace affssl
