#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "affssl/core/image.hpp"

namespace affssl {

enum class Split { kTrain, kEval };

// Images held as uint8 CHW at a fixed per-dataset resolution; converted to
// [0,1] doubles on access.
class Dataset {
public:
    Dataset(std::string name, int channels, int height, int width, int num_classes)
        : name_(std::move(name)), c_(channels), h_(height), w_(width), num_classes_(num_classes) {}

    void add(std::vector<uint8_t> image, int label, int64_t id);
    void truncate(size_t limit);

    size_t size() const { return images_.size(); }
    int num_classes() const { return num_classes_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    const std::string& name() const { return name_; }
    int label(size_t i) const { return labels_.at(i); }
    int64_t id(size_t i) const { return ids_.at(i); }

    // Copies item i into batch slot `slot` (shapes must match).
    void fill(size_t i, ImageBatch& batch, int64_t slot) const;
    ImageBatch get(size_t i) const;
    ImageBatch get_batch(const std::vector<size_t>& indices) const;

private:
    std::string name_;
    int c_, h_, w_, num_classes_;
    std::vector<std::vector<uint8_t>> images_;
    std::vector<int> labels_;
    std::vector<int64_t> ids_;
};

// Supported ids: cifar10, cifar100, tiny_imagenet, caltech101 in their
// standard published on-disk layouts under `root`.
Dataset load_dataset(const std::string& name, const std::string& root, Split split,
                     std::optional<size_t> limit = std::nullopt);

}  // namespace affssl
