#include "affssl/nn/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "affssl/core/errors.hpp"

namespace affssl::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

// ---------------------------------------------------------------- Linear

Linear::Linear(int64_t in_dim, int64_t out_dim, std::string name)
    : weight_({out_dim, in_dim}, true, name + ".weight"),
      bias_({out_dim}, false, name + ".bias"),
      in_(in_dim),
      out_(out_dim) {}

void Linear::init(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_));
    for (auto& v : weight_.w.vec()) v = normal(rng, 0.0, std);
    bias_.w.zero();
}

Tensor Linear::forward(const Tensor& x, LayerCache* cache) const {
    if (x.rank() != 2 || x.dim(1) != in_)
        throw ContractError("Linear " + weight_.name + ": bad input shape " + x.shape_str());
    const int64_t n = x.dim(0);
    Tensor y({n, out_});
    MapC X(x.data(), n, in_);
    MapC W(weight_.w.data(), out_, in_);
    MapM Y(y.data(), n, out_);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.w.data(), out_);
    if (cache) cache->x = x;
    return y;
}

Tensor Linear::backward(const Tensor& gy, const LayerCache& cache) {
    const int64_t n = gy.dim(0);
    MapC GY(gy.data(), n, out_);
    MapC X(cache.x.data(), n, in_);
    MapM GW(weight_.g.data(), out_, in_);
    GW.noalias() += GY.transpose() * X;
    Eigen::Map<Eigen::RowVectorXd>(bias_.g.data(), out_) += GY.colwise().sum();
    Tensor gx({n, in_});
    MapM GX(gx.data(), n, in_);
    MapC W(weight_.w.data(), out_, in_);
    GX.noalias() = GY * W;
    return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, LayerCache* cache) const {
    Tensor y = x;
    for (auto& v : y.vec()) v = v > 0.0 ? v : 0.0;
    if (cache) cache->x = x;
    return y;
}

Tensor ReLU::backward(const Tensor& gy, const LayerCache& cache) {
    Tensor gx = gy;
    for (int64_t i = 0; i < gx.numel(); ++i)
        if (cache.x[i] <= 0.0) gx[i] = 0.0;
    return gx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int64_t in_ch, int64_t out_ch, std::string name)
    : weight_({out_ch, in_ch * 9}, true, name + ".weight"),
      bias_({out_ch}, false, name + ".bias"),
      in_ch_(in_ch),
      out_ch_(out_ch) {}

void Conv2d::init(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_ch_ * 9));
    for (auto& v : weight_.w.vec()) v = normal(rng, 0.0, std);
    bias_.w.zero();
}

namespace {

// (C,H,W) sample -> (C*9, H*W) column matrix for 3x3/s1/p1.
void im2col(const double* x, int64_t c, int64_t h, int64_t w, double* col) {
    const int64_t hw = h * w;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
                double* row = col + ((ci * 9 + ky * 3 + kx) * hw);
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t sy = y + ky - 1;
                    for (int64_t x2 = 0; x2 < w; ++x2) {
                        const int64_t sx = x2 + kx - 1;
                        row[y * w + x2] = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                                              ? 0.0
                                              : x[(ci * h + sy) * w + sx];
                    }
                }
            }
}

void col2im_add(const double* col, int64_t c, int64_t h, int64_t w, double* x) {
    const int64_t hw = h * w;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
                const double* row = col + ((ci * 9 + ky * 3 + kx) * hw);
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (int64_t x2 = 0; x2 < w; ++x2) {
                        const int64_t sx = x2 + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        x[(ci * h + sy) * w + sx] += row[y * w + x2];
                    }
                }
            }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, LayerCache* cache) const {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
        throw ContractError("Conv2d " + weight_.name + ": bad input shape " + x.shape_str());
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    const int64_t k = in_ch_ * 9;
    Tensor y({n, out_ch_, h, w});
    Tensor cols({n, k, hw});
    MapC W(weight_.w.data(), out_ch_, k);
    for (int64_t i = 0; i < n; ++i) {
        double* col = cols.data() + i * k * hw;
        im2col(x.data() + i * in_ch_ * hw, in_ch_, h, w, col);
        MapC Col(col, k, hw);
        MapM Y(y.data() + i * out_ch_ * hw, out_ch_, hw);
        Y.noalias() = W * Col;
        Y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias_.w.data(), out_ch_);
    }
    if (cache) {
        cache->x = x;
        cache->aux = std::move(cols);
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy, const LayerCache& cache) {
    const Tensor& x = cache.x;
    const int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3), hw = h * w;
    const int64_t k = in_ch_ * 9;
    Tensor gx = Tensor::zeros_like(x);
    MapM GW(weight_.g.data(), out_ch_, k);
    MapC W(weight_.w.data(), out_ch_, k);
    Eigen::Map<Eigen::VectorXd> GB(bias_.g.data(), out_ch_);
    Tensor gcol({k, hw});
    for (int64_t i = 0; i < n; ++i) {
        MapC GY(gy.data() + i * out_ch_ * hw, out_ch_, hw);
        MapC Col(cache.aux.data() + i * k * hw, k, hw);
        GW.noalias() += GY * Col.transpose();
        GB += GY.rowwise().sum();
        MapM GCol(gcol.data(), k, hw);
        GCol.noalias() = W.transpose() * GY;
        col2im_add(gcol.data(), in_ch_, h, w, gx.data() + i * in_ch_ * hw);
    }
    return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---------------------------------------------------------------- pooling

Tensor AvgPool2::forward(const Tensor& x, LayerCache* cache) const {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    for (int64_t i = 0; i < n * c; ++i) {
        const double* src = x.data() + i * h * w;
        double* dst = y.data() + i * oh * ow;
        for (int64_t yy = 0; yy < oh; ++yy)
            for (int64_t xx = 0; xx < ow; ++xx)
                dst[yy * ow + xx] = 0.25 * (src[(2 * yy) * w + 2 * xx] + src[(2 * yy) * w + 2 * xx + 1] +
                                            src[(2 * yy + 1) * w + 2 * xx] +
                                            src[(2 * yy + 1) * w + 2 * xx + 1]);
    }
    if (cache) cache->x = Tensor({n, c, h, w});  // only shape needed
    return y;
}

Tensor AvgPool2::backward(const Tensor& gy, const LayerCache& cache) {
    const auto& s = cache.x.shape();
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    const int64_t oh = h / 2, ow = w / 2;
    Tensor gx({n, c, h, w});
    for (int64_t i = 0; i < n * c; ++i) {
        const double* src = gy.data() + i * oh * ow;
        double* dst = gx.data() + i * h * w;
        for (int64_t yy = 0; yy < oh; ++yy)
            for (int64_t xx = 0; xx < ow; ++xx) {
                const double v = 0.25 * src[yy * ow + xx];
                dst[(2 * yy) * w + 2 * xx] = v;
                dst[(2 * yy) * w + 2 * xx + 1] = v;
                dst[(2 * yy + 1) * w + 2 * xx] = v;
                dst[(2 * yy + 1) * w + 2 * xx + 1] = v;
            }
    }
    return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, LayerCache* cache) const {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({n, c});
    for (int64_t i = 0; i < n * c; ++i) {
        const double* src = x.data() + i * hw;
        double s = 0.0;
        for (int64_t j = 0; j < hw; ++j) s += src[j];
        y[i] = s / static_cast<double>(hw);
    }
    if (cache) cache->x = Tensor(x.shape());
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy, const LayerCache& cache) {
    const auto& s = cache.x.shape();
    const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
    Tensor gx(s);
    for (int64_t i = 0; i < n * c; ++i) {
        const double v = gy[i] / static_cast<double>(hw);
        double* dst = gx.data() + i * hw;
        for (int64_t j = 0; j < hw; ++j) dst[j] = v;
    }
    return gx;
}

// ---------------------------------------------------------------- Net

Tensor Net::forward(const Tensor& x, NetCache* cache) const {
    if (cache) cache->resize(layers_.size());
    Tensor cur = x;
    for (size_t i = 0; i < layers_.size(); ++i)
        cur = layers_[i]->forward(cur, cache ? &(*cache)[i] : nullptr);
    return cur;
}

Tensor Net::backward(const Tensor& gy, const NetCache& cache) {
    if (cache.size() != layers_.size()) throw ContractError("Net::backward: cache size mismatch");
    Tensor cur = gy;
    for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur, cache[i]);
    return cur;
}

std::vector<Param*> Net::params() {
    std::vector<Param*> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
}

void Net::init(uint64_t seed) {
    size_t idx = 0;
    for (auto& l : layers_) {
        Rng rng = make_rng({seed, stream::kInit, idx++});
        l->init(rng);
    }
}

void Net::zero_grads() {
    for (Param* p : params()) p->g.zero();
}

int64_t Net::param_count() const {
    std::vector<Param*> ps;
    for (auto& l : const_cast<Net*>(this)->layers_) l->collect_params(ps);
    int64_t n = 0;
    for (Param* p : ps) n += p->w.numel();
    return n;
}

void Net::copy_params_from(const Net& other) {
    auto dst = params();
    auto src = const_cast<Net&>(other).params();
    if (dst.size() != src.size()) throw ContractError("Net::copy_params_from: layout mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        if (!dst[i]->w.same_shape(src[i]->w))
            throw ContractError("Net::copy_params_from: shape mismatch at " + dst[i]->name);
        dst[i]->w = src[i]->w;
    }
}

Net make_mlp(int64_t in_dim, int64_t hidden, int64_t out_dim, const std::string& name) {
    Net net;
    net.add(std::make_unique<Linear>(in_dim, hidden, name + ".fc1"));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<Linear>(hidden, out_dim, name + ".fc2"));
    return net;
}

}  // namespace affssl::nn
