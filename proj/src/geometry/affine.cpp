#include "affssl/geometry/affine.hpp"

#include <cmath>

namespace affssl {

namespace {
constexpr double kPi = 3.14159265358979323846;
double deg2rad(double d) { return d * kPi / 180.0; }

void check_interval(const Interval& iv, const char* name) {
    if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
        throw ConfigError(std::string("AffineRanges: invalid interval for ") + name);
}
}  // namespace

void AffineRanges::validate() const {
    check_interval(theta, "theta");
    check_interval(translation, "translation");
    check_interval(sigma, "sigma");
    check_interval(shear, "shear");
    if (translation.lo < 0.0) throw ConfigError("AffineRanges: translation magnitude must be >= 0");
    if (sigma.lo <= 0.0) throw ConfigError("AffineRanges: scale interval must be strictly positive");
}

AffineMatrix AffineMatrix::operator*(const AffineMatrix& o) const {
    AffineMatrix r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
            r.at(i, j) = s;
        }
    // Affine * affine stays affine; pin the bottom row against drift.
    r.at(2, 0) = 0.0;
    r.at(2, 1) = 0.0;
    r.at(2, 2) = 1.0;
    return r;
}

void AffineMatrix::apply(double x, double y, double& ox, double& oy) const {
    ox = at(0, 0) * x + at(0, 1) * y + at(0, 2);
    oy = at(1, 0) * x + at(1, 1) * y + at(1, 2);
}

AffineParams sample_affine_params(Rng& rng, const ComponentMask& mask, const AffineRanges& ranges) {
    mask.validate();
    ranges.validate();
    AffineParams p = AffineParams::identity();
    if (mask.use_rotation) p.theta = uniform(rng, ranges.theta.lo, ranges.theta.hi);
    if (mask.use_translation) {
        p.tx = uniform(rng, ranges.translation.lo, ranges.translation.hi);
        p.ty = uniform(rng, ranges.translation.lo, ranges.translation.hi);
        if (ranges.signed_translation) {
            if (uniform(rng, 0.0, 1.0) < 0.5) p.tx = -p.tx;
            if (uniform(rng, 0.0, 1.0) < 0.5) p.ty = -p.ty;
        }
    }
    if (mask.use_scale) p.sigma = uniform(rng, ranges.sigma.lo, ranges.sigma.hi);
    if (mask.use_shear) {
        p.sx = uniform(rng, ranges.shear.lo, ranges.shear.hi);
        p.sy = uniform(rng, ranges.shear.lo, ranges.shear.hi);
    }
    return p;
}

AffineMatrix build_matrix(const AffineParams& p, int width, int height) {
    if (width < 1 || height < 1) throw ContractError("build_matrix: width and height must be >= 1");
    const double cx = 0.5 * (width - 1);
    const double cy = 0.5 * (height - 1);

    AffineMatrix C = AffineMatrix::identity();
    C.at(0, 2) = cx;
    C.at(1, 2) = cy;
    AffineMatrix Cinv = AffineMatrix::identity();
    Cinv.at(0, 2) = -cx;
    Cinv.at(1, 2) = -cy;

    AffineMatrix T = AffineMatrix::identity();
    T.at(0, 2) = p.tx * width;
    T.at(1, 2) = p.ty * height;

    AffineMatrix R = AffineMatrix::identity();
    const double a = deg2rad(p.theta);
    R.at(0, 0) = std::cos(a);
    R.at(0, 1) = -std::sin(a);
    R.at(1, 0) = std::sin(a);
    R.at(1, 1) = std::cos(a);

    AffineMatrix Sh = AffineMatrix::identity();
    Sh.at(0, 1) = std::tan(deg2rad(p.sx));
    Sh.at(1, 0) = std::tan(deg2rad(p.sy));

    AffineMatrix Sc = AffineMatrix::identity();
    Sc.at(0, 0) = p.sigma;
    Sc.at(1, 1) = p.sigma;

    return C * T * R * Sh * Sc * Cinv;
}

AffineMatrix invert(const AffineMatrix& m) {
    const double det = m.det2();
    if (std::abs(det) < 1e-12) throw NumericError("invert: near-singular affine matrix");
    AffineMatrix r;
    const double a = m.at(0, 0), b = m.at(0, 1), tx = m.at(0, 2);
    const double c = m.at(1, 0), d = m.at(1, 1), ty = m.at(1, 2);
    r.at(0, 0) = d / det;
    r.at(0, 1) = -b / det;
    r.at(1, 0) = -c / det;
    r.at(1, 1) = a / det;
    r.at(0, 2) = (b * ty - d * tx) / det;
    r.at(1, 2) = (c * tx - a * ty) / det;
    return r;
}

namespace {

double map_to_unit(double v, double lo, double hi, const char* name) {
    if (hi == lo) return 0.0;  // collapsed interval: constant component
    if (v < lo - 1e-9 || v > hi + 1e-9)
        throw ContractError(std::string("normalize_params: ") + name + " out of range");
    return (v - lo) / (hi - lo) * 2.0 - 1.0;
}

double map_from_unit(double u, double lo, double hi) {
    return lo + (u + 1.0) * 0.5 * (hi - lo);
}

}  // namespace

std::vector<double> normalize_params(const AffineParams& p, const ComponentMask& mask,
                                     const AffineRanges& ranges) {
    mask.validate();
    ranges.validate();
    const double t_lo = ranges.signed_translation ? -ranges.translation.hi : ranges.translation.lo;
    const double t_hi = ranges.translation.hi;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(mask.active_dim()));
    if (mask.use_rotation) out.push_back(map_to_unit(p.theta, ranges.theta.lo, ranges.theta.hi, "theta"));
    if (mask.use_translation) {
        out.push_back(map_to_unit(p.tx, t_lo, t_hi, "tx"));
        out.push_back(map_to_unit(p.ty, t_lo, t_hi, "ty"));
    }
    if (mask.use_scale) out.push_back(map_to_unit(p.sigma, ranges.sigma.lo, ranges.sigma.hi, "sigma"));
    if (mask.use_shear) {
        out.push_back(map_to_unit(p.sx, ranges.shear.lo, ranges.shear.hi, "sx"));
        out.push_back(map_to_unit(p.sy, ranges.shear.lo, ranges.shear.hi, "sy"));
    }
    return out;
}

AffineParams denormalize_params(const std::vector<double>& v, const ComponentMask& mask,
                                const AffineRanges& ranges) {
    mask.validate();
    if (static_cast<int>(v.size()) != mask.active_dim())
        throw ContractError("denormalize_params: dimension does not match mask");
    const double t_lo = ranges.signed_translation ? -ranges.translation.hi : ranges.translation.lo;
    const double t_hi = ranges.translation.hi;
    AffineParams p = AffineParams::identity();
    size_t i = 0;
    if (mask.use_rotation) p.theta = map_from_unit(v[i++], ranges.theta.lo, ranges.theta.hi);
    if (mask.use_translation) {
        p.tx = map_from_unit(v[i++], t_lo, t_hi);
        p.ty = map_from_unit(v[i++], t_lo, t_hi);
    }
    if (mask.use_scale) p.sigma = map_from_unit(v[i++], ranges.sigma.lo, ranges.sigma.hi);
    if (mask.use_shear) {
        p.sx = map_from_unit(v[i++], ranges.shear.lo, ranges.shear.hi);
        p.sy = map_from_unit(v[i++], ranges.shear.lo, ranges.shear.hi);
    }
    return p;
}

}  // namespace affssl
