#pragma once

#include <array>

#include "affssl/core/image.hpp"
#include "affssl/geometry/affine.hpp"

namespace affssl {

// Pixel centers sit at integer coordinates; pixel (0,0) spans [-0.5, 0.5]^2,
// so the full image footprint is [-0.5, w-0.5] x [-0.5, h-0.5].

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using Quad = std::array<Point, 4>;

struct BoundedCropRect {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

// Backward warp: output pixel q samples the input at H^-1 q, bilinear,
// zero fill outside the source image.
ImageBatch warp_image(const ImageBatch& img, const AffineMatrix& m);

// Images of the four input corners under H, ordered counterclockwise
// (positive signed area in x-right / y-down coordinates).
Quad footprint_polygon(const AffineMatrix& m, int width, int height);

double polygon_area(const Quad& q);
bool point_in_convex_polygon(const Quad& poly, double x, double y, double tol = 1e-6);

// Largest axis-aligned rectangle inside a convex quadrilateral. Exact in x
// for a fixed row span (convex cross-sections attain their extremes at the
// span endpoints), searched plus locally refined over (y0, y1).
BoundedCropRect max_inscribed_rect(const Quad& poly);

// Bilinear resample of a source-coordinate rectangle to (out_h, out_w).
ImageBatch crop_resize(const ImageBatch& img, const BoundedCropRect& rect, int out_h, int out_w);
ImageBatch resize_bilinear(const ImageBatch& img, int out_h, int out_w);

}  // namespace affssl
