#pragma once

#include <array>
#include <cstdint>

#include "affssl/core/errors.hpp"
#include "affssl/core/rng.hpp"

namespace affssl {

// 6-DoF affine parameter vector: rotation angle (deg), translations as
// fractions of width/height (signed), isotropic scale, shear angles (deg).
struct AffineParams {
    double theta = 0.0;
    double tx = 0.0;
    double ty = 0.0;
    double sigma = 1.0;
    double sx = 0.0;
    double sy = 0.0;

    static AffineParams identity() { return {}; }
    std::array<double, 6> as_array() const { return {theta, tx, ty, sigma, sx, sy}; }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double mid() const { return 0.5 * (lo + hi); }
    double half() const { return 0.5 * (hi - lo); }
};

// Per-component sampling intervals. Translation intervals are magnitudes;
// when signed_translation is set an independent uniform sign is drawn per
// axis and the normalized target spans the full signed interval.
struct AffineRanges {
    Interval theta{-90.0, 90.0};
    Interval translation{0.0, 0.25};  // magnitude, per axis
    Interval sigma{0.7, 1.3};
    Interval shear{-25.0, 25.0};
    bool signed_translation = true;

    static AffineRanges paper() { return {}; }
    // Every interval collapsed onto identity values; warps become no-ops.
    static AffineRanges identity_forcing() {
        return {{0, 0}, {0, 0}, {1, 1}, {0, 0}, true};
    }
    void validate() const;
};

struct ComponentMask {
    bool use_translation = true;
    bool use_shear = true;
    bool use_rotation = true;
    bool use_scale = true;

    static ComponentMask all() { return {}; }
    static ComponentMask only_translation() { return {true, false, false, false}; }
    static ComponentMask only_shear() { return {false, true, false, false}; }
    static ComponentMask only_rotation() { return {false, false, true, false}; }
    static ComponentMask only_scale() { return {false, false, false, true}; }

    bool any() const { return use_translation || use_shear || use_rotation || use_scale; }
    // Number of scalar regression targets: 2 per translation/shear, 1 otherwise.
    int active_dim() const {
        return (use_rotation ? 1 : 0) + (use_translation ? 2 : 0) + (use_scale ? 1 : 0) +
               (use_shear ? 2 : 0);
    }
    void validate() const {
        if (!any()) throw ConfigError("ComponentMask: at least one affine component must be enabled");
    }
};

// 3x3 homogeneous matrix with fixed bottom row [0,0,1], row-major.
struct AffineMatrix {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static AffineMatrix identity() { return {}; }
    double& at(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }
    double at(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }
    double det2() const { return at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0); }

    AffineMatrix operator*(const AffineMatrix& o) const;
    // Maps (x, y) through the homogeneous transform.
    void apply(double x, double y, double& ox, double& oy) const;
};

AffineParams sample_affine_params(Rng& rng, const ComponentMask& mask, const AffineRanges& ranges);

// H = C * T * R * Sh * Sc * C^-1, pivot at the image center.
AffineMatrix build_matrix(const AffineParams& p, int width, int height);

AffineMatrix invert(const AffineMatrix& m);

// Maps params into [-1,1]^k where k = mask.active_dim(), ordered
// [theta, tx, ty, sigma, sx, sy] restricted to active components.
std::vector<double> normalize_params(const AffineParams& p, const ComponentMask& mask,
                                     const AffineRanges& ranges);
AffineParams denormalize_params(const std::vector<double>& v, const ComponentMask& mask,
                                const AffineRanges& ranges);

}  // namespace affssl
