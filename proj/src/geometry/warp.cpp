#include "affssl/geometry/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace affssl {

namespace {

double sample_bilinear(const ImageBatch& img, int64_t i, int64_t ch, double x, double y) {
    const int64_t w = img.width(), h = img.height();
    const double fx = std::floor(x), fy = std::floor(y);
    const int64_t x0 = static_cast<int64_t>(fx), y0 = static_cast<int64_t>(fy);
    const double ax = x - fx, ay = y - fy;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            const int64_t px = x0 + dx, py = y0 + dy;
            if (px < 0 || px >= w || py < 0 || py >= h) continue;  // zero fill
            const double wgt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
            acc += wgt * img.at(i, ch, py, px);
        }
    return acc;
}

}  // namespace

ImageBatch warp_image(const ImageBatch& img, const AffineMatrix& m) {
    img.check_nonempty();
    const AffineMatrix inv = invert(m);
    ImageBatch out(img.n(), img.channels(), img.height(), img.width());
    out.ids = img.ids;
    for (int64_t i = 0; i < img.n(); ++i)
        for (int64_t y = 0; y < img.height(); ++y)
            for (int64_t x = 0; x < img.width(); ++x) {
                double sx, sy;
                inv.apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
                for (int64_t ch = 0; ch < img.channels(); ++ch)
                    out.at(i, ch, y, x) = sample_bilinear(img, i, ch, sx, sy);
            }
    return out;
}

Quad footprint_polygon(const AffineMatrix& m, int width, int height) {
    if (std::abs(m.det2()) < 1e-12) throw NumericError("footprint_polygon: singular matrix");
    const double w = width, h = height;
    const Quad corners = {Point{-0.5, -0.5}, Point{w - 0.5, -0.5}, Point{w - 0.5, h - 0.5},
                          Point{-0.5, h - 0.5}};
    Quad out;
    for (size_t i = 0; i < 4; ++i) m.apply(corners[i].x, corners[i].y, out[i].x, out[i].y);
    if (polygon_area(out) < 0.0) std::swap(out[1], out[3]);
    return out;
}

double polygon_area(const Quad& q) {
    double a = 0.0;
    for (size_t i = 0; i < 4; ++i) {
        const Point& p0 = q[i];
        const Point& p1 = q[(i + 1) % 4];
        a += p0.x * p1.y - p1.x * p0.y;
    }
    return 0.5 * a;
}

bool point_in_convex_polygon(const Quad& poly, double x, double y, double tol) {
    // Assumes positive orientation; a point is inside iff it is on the left
    // of (or within tol of) every edge.
    for (size_t i = 0; i < 4; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % 4];
        const double ex = b.x - a.x, ey = b.y - a.y;
        const double len = std::hypot(ex, ey);
        if (len < 1e-15) continue;
        const double cross = ex * (y - a.y) - ey * (x - a.x);
        if (cross / len < -tol) return false;
    }
    return true;
}

namespace {

// Horizontal cross-section [L(y), R(y)] of a convex quad. Returns false if
// the line y does not intersect the polygon.
bool cross_section(const Quad& poly, double y, double& left, double& right) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (size_t i = 0; i < 4; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % 4];
        const double y0 = a.y, y1 = b.y;
        if ((y < std::min(y0, y1) - 1e-12) || (y > std::max(y0, y1) + 1e-12)) continue;
        double x;
        if (std::abs(y1 - y0) < 1e-12) {
            lo = std::min({lo, a.x, b.x});
            hi = std::max({hi, a.x, b.x});
            any = true;
            continue;
        }
        x = a.x + (b.x - a.x) * (y - y0) / (y1 - y0);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        any = true;
    }
    if (!any) return false;
    left = lo;
    right = hi;
    return true;
}

// Width of the admissible x interval for a rectangle spanning rows [y0, y1].
// L is convex and R concave in y, so the binding constraints are at the ends.
double span_area(const Quad& poly, double y0, double y1, double* x0 = nullptr, double* x1 = nullptr) {
    if (y1 <= y0) return 0.0;
    double l0, r0, l1, r1;
    if (!cross_section(poly, y0, l0, r0) || !cross_section(poly, y1, l1, r1)) return 0.0;
    const double left = std::max(l0, l1);
    const double right = std::min(r0, r1);
    if (right <= left) return 0.0;
    if (x0) *x0 = left;
    if (x1) *x1 = right;
    return (right - left) * (y1 - y0);
}

}  // namespace

BoundedCropRect max_inscribed_rect(const Quad& poly) {
    Quad p = poly;
    if (polygon_area(p) < 0.0) std::swap(p[1], p[3]);
    if (polygon_area(p) < 1.0) throw NumericError("max_inscribed_rect: degenerate polygon");

    double ymin = p[0].y, ymax = p[0].y;
    for (const Point& v : p) {
        ymin = std::min(ymin, v.y);
        ymax = std::max(ymax, v.y);
    }

    // Coarse grid over (y0, y1), then zoom refinements.
    double best_a = -1.0, best_y0 = ymin, best_y1 = ymax;
    double lo0 = ymin, hi0 = ymax, lo1 = ymin, hi1 = ymax;
    const int kGrid = 192;
    for (int pass = 0; pass < 4; ++pass) {
        const double step0 = (hi0 - lo0) / kGrid;
        const double step1 = (hi1 - lo1) / kGrid;
        for (int i = 0; i <= kGrid; ++i) {
            const double y0 = lo0 + step0 * i;
            for (int j = 0; j <= kGrid; ++j) {
                const double y1 = lo1 + step1 * j;
                const double a = span_area(p, y0, y1);
                if (a > best_a) {
                    best_a = a;
                    best_y0 = y0;
                    best_y1 = y1;
                }
            }
        }
        const double w0 = 2.0 * step0, w1 = 2.0 * step1;
        lo0 = std::max(ymin, best_y0 - w0);
        hi0 = std::min(ymax, best_y0 + w0);
        lo1 = std::max(ymin, best_y1 - w1);
        hi1 = std::min(ymax, best_y1 + w1);
    }

    BoundedCropRect r;
    r.y0 = best_y0;
    r.y1 = best_y1;
    span_area(p, best_y0, best_y1, &r.x0, &r.x1);
    // Nudge strictly inside so the corner containment contract holds.
    const double eps = 1e-7;
    r.x0 += eps;
    r.y0 += eps;
    r.x1 -= eps;
    r.y1 -= eps;
    return r;
}

namespace {

ImageBatch resample_rect(const ImageBatch& img, const BoundedCropRect& rect, int out_h, int out_w) {
    img.check_nonempty();
    if (out_h < 1 || out_w < 1) throw ContractError("crop_resize: output dims must be >= 1");
    if (rect.x1 <= rect.x0 || rect.y1 <= rect.y0)
        throw ContractError("crop_resize: empty source rectangle");
    ImageBatch out(img.n(), img.channels(), out_h, out_w);
    out.ids = img.ids;
    const double sx = (rect.x1 - rect.x0) / out_w;
    const double sy = (rect.y1 - rect.y0) / out_h;
    for (int64_t i = 0; i < img.n(); ++i)
        for (int y = 0; y < out_h; ++y) {
            const double src_y = rect.y0 + (y + 0.5) * sy;
            for (int x = 0; x < out_w; ++x) {
                const double src_x = rect.x0 + (x + 0.5) * sx;
                for (int64_t ch = 0; ch < img.channels(); ++ch)
                    out.at(i, ch, y, x) = sample_bilinear(img, i, ch, src_x, src_y);
            }
        }
    return out;
}

}  // namespace

ImageBatch crop_resize(const ImageBatch& img, const BoundedCropRect& rect, int out_h, int out_w) {
    return resample_rect(img, rect, out_h, out_w);
}

ImageBatch resize_bilinear(const ImageBatch& img, int out_h, int out_w) {
    BoundedCropRect full{-0.5, -0.5, img.width() - 0.5, img.height() - 0.5};
    return resample_rect(img, full, out_h, out_w);
}

}  // namespace affssl
