#pragma once

#include <cstdint>
#include <vector>

#include "affssl/core/errors.hpp"
#include "affssl/core/tensor.hpp"

namespace affssl {

// Batch of images, NCHW, values in [0,1].
struct ImageBatch {
    Tensor data;                    // (n, c, h, w)
    std::vector<int64_t> ids;       // per-item provenance (dataset indices)

    ImageBatch() = default;
    ImageBatch(int64_t n, int64_t c, int64_t h, int64_t w) : data({n, c, h, w}) {}

    int64_t n() const { return data.rank() == 4 ? data.dim(0) : 0; }
    int64_t channels() const { return data.dim(1); }
    int64_t height() const { return data.dim(2); }
    int64_t width() const { return data.dim(3); }

    double& at(int64_t i, int64_t ch, int64_t y, int64_t x) {
        return data[((i * channels() + ch) * height() + y) * width() + x];
    }
    double at(int64_t i, int64_t ch, int64_t y, int64_t x) const {
        return data[((i * channels() + ch) * height() + y) * width() + x];
    }

    void check_nonempty() const {
        if (data.rank() != 4 || n() == 0) throw ContractError("ImageBatch: empty or malformed batch");
    }
};

}  // namespace affssl
