#pragma once

#include <memory>
#include <string>
#include <vector>

#include "affssl/core/rng.hpp"
#include "affssl/core/tensor.hpp"

namespace affssl::nn {

struct Param {
    Tensor w;
    Tensor g;             // accumulated gradient, zeroed by the optimizer step
    bool decay = true;    // weight decay applies (off for biases)
    std::string name;

    Param() = default;
    Param(std::vector<int64_t> shape, bool decay_, std::string name_)
        : w(shape), g(std::move(shape)), decay(decay_), name(std::move(name_)) {}
};

// Per-call activation cache. Layers are stateless with respect to
// activations so a shared encoder can run several forward passes per step
// (two views plus affine branches) and backprop each one independently.
struct LayerCache {
    Tensor x;    // layer input
    Tensor aux;  // layer-specific extra (e.g. im2col buffer)
};

using NetCache = std::vector<LayerCache>;

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, LayerCache* cache) const = 0;
    // Accumulates into param gradients, returns gradient w.r.t. the input.
    virtual Tensor backward(const Tensor& gy, const LayerCache& cache) = 0;
    virtual void collect_params(std::vector<Param*>& out) {}
    virtual void init(Rng& rng) {}
};

class Linear final : public Layer {
public:
    Linear(int64_t in_dim, int64_t out_dim, std::string name);
    Tensor forward(const Tensor& x, LayerCache* cache) const override;
    Tensor backward(const Tensor& gy, const LayerCache& cache) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;

    int64_t in_dim() const { return in_; }
    int64_t out_dim() const { return out_; }
    Param weight_, bias_;

private:
    int64_t in_, out_;
};

class ReLU final : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCache* cache) const override;
    Tensor backward(const Tensor& gy, const LayerCache& cache) override;
};

// 3x3 conv, stride 1, zero padding 1.
class Conv2d final : public Layer {
public:
    Conv2d(int64_t in_ch, int64_t out_ch, std::string name);
    Tensor forward(const Tensor& x, LayerCache* cache) const override;
    Tensor backward(const Tensor& gy, const LayerCache& cache) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;

    Param weight_, bias_;  // weight (out_ch, in_ch*9)

private:
    int64_t in_ch_, out_ch_;
};

// 2x2 average pool, stride 2 (odd trailing row/col dropped).
class AvgPool2 final : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCache* cache) const override;
    Tensor backward(const Tensor& gy, const LayerCache& cache) override;
};

// (N,C,H,W) -> (N,C) spatial mean.
class GlobalAvgPool final : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCache* cache) const override;
    Tensor backward(const Tensor& gy, const LayerCache& cache) override;
};

class Net {
public:
    Net() = default;
    Net(Net&&) = default;
    Net& operator=(Net&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    Tensor forward(const Tensor& x, NetCache* cache) const;
    // Returns gradient w.r.t. the net input; param grads are accumulated.
    Tensor backward(const Tensor& gy, const NetCache& cache);

    std::vector<Param*> params();
    void init(uint64_t seed);
    void zero_grads();
    int64_t param_count() const;
    void copy_params_from(const Net& other);

    size_t num_layers() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Two-layer MLP head: Linear -> ReLU -> Linear.
Net make_mlp(int64_t in_dim, int64_t hidden, int64_t out_dim, const std::string& name);

}  // namespace affssl::nn
