#include "affssl/data/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "affssl/core/rng.hpp"

namespace fs = std::filesystem;

namespace affssl {

void Dataset::add(std::vector<uint8_t> image, int label, int64_t id) {
    if (static_cast<int64_t>(image.size()) != int64_t(c_) * h_ * w_)
        throw IngestionError("Dataset::add: wrong image size for " + name_);
    images_.push_back(std::move(image));
    labels_.push_back(label);
    ids_.push_back(id);
}

void Dataset::truncate(size_t limit) {
    if (images_.size() > limit) {
        images_.resize(limit);
        labels_.resize(limit);
        ids_.resize(limit);
    }
}

void Dataset::fill(size_t i, ImageBatch& batch, int64_t slot) const {
    const auto& img = images_.at(i);
    double* dst = batch.data.data() + slot * c_ * h_ * w_;
    for (size_t j = 0; j < img.size(); ++j) dst[j] = img[j] / 255.0;
    if (static_cast<size_t>(slot) < batch.ids.size()) batch.ids[slot] = ids_[i];
}

ImageBatch Dataset::get(size_t i) const {
    ImageBatch b(1, c_, h_, w_);
    b.ids.resize(1);
    fill(i, b, 0);
    return b;
}

ImageBatch Dataset::get_batch(const std::vector<size_t>& indices) const {
    ImageBatch b(static_cast<int64_t>(indices.size()), c_, h_, w_);
    b.ids.resize(indices.size());
    for (size_t s = 0; s < indices.size(); ++s) fill(indices[s], b, static_cast<int64_t>(s));
    return b;
}

namespace {

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw IngestionError("missing dataset file: " + p.string());
}

// label byte(s) + 3072 bytes of RRR..GGG..BBB per record
void read_cifar_file(const fs::path& p, int label_bytes, int label_index, Dataset& out,
                     int64_t& next_id) {
    require_file(p);
    std::ifstream f(p, std::ios::binary);
    const size_t rec = static_cast<size_t>(label_bytes) + 3072;
    std::vector<uint8_t> buf(rec);
    while (f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec)))
        out.add(std::vector<uint8_t>(buf.begin() + label_bytes, buf.end()), buf[label_index],
                next_id++);
}

Dataset load_cifar10(const std::string& root, Split split) {
    const fs::path base = fs::path(root) / "cifar-10-batches-bin";
    Dataset d("cifar10", 3, 32, 32, 10);
    int64_t id = 0;
    if (split == Split::kTrain) {
        for (int i = 1; i <= 5; ++i)
            read_cifar_file(base / ("data_batch_" + std::to_string(i) + ".bin"), 1, 0, d, id);
    } else {
        read_cifar_file(base / "test_batch.bin", 1, 0, d, id);
    }
    return d;
}

Dataset load_cifar100(const std::string& root, Split split) {
    const fs::path base = fs::path(root) / "cifar-100-binary";
    Dataset d("cifar100", 3, 32, 32, 100);
    int64_t id = 0;
    // record: coarse label, fine label, image; we use fine labels
    read_cifar_file(base / (split == Split::kTrain ? "train.bin" : "test.bin"), 2, 1, d, id);
    return d;
}

std::vector<uint8_t> decode_resized(const fs::path& file, int res) {
    cv::Mat img = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw IngestionError("failed to decode image: " + file.string());
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(res, res), 0, 0, cv::INTER_AREA);
    std::vector<uint8_t> chw(static_cast<size_t>(3) * res * res);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const cv::Vec3b px = resized.at<cv::Vec3b>(y, x);  // BGR
            chw[static_cast<size_t>(0 * res + y) * res + x] = px[2];
            chw[static_cast<size_t>(1 * res + y) * res + x] = px[1];
            chw[static_cast<size_t>(2 * res + y) * res + x] = px[0];
        }
    return chw;
}

std::vector<fs::path> sorted_dirs(const fs::path& p) {
    require_file(p);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_files(const fs::path& p) {
    require_file(p);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Dataset load_tiny_imagenet(const std::string& root, Split split) {
    const fs::path base = fs::path(root) / "tiny-imagenet-200";
    const int res = 64;
    Dataset d("tiny_imagenet", 3, res, res, 200);
    int64_t id = 0;
    if (split == Split::kTrain) {
        const auto wnids = sorted_dirs(base / "train");
        int label = 0;
        for (const auto& wnid : wnids) {
            for (const auto& f : sorted_files(wnid / "images"))
                d.add(decode_resized(f, res), label, id++);
            ++label;
        }
    } else {
        // val/val_annotations.txt: filename<TAB>wnid<TAB>bbox
        const fs::path ann = base / "val" / "val_annotations.txt";
        require_file(ann);
        std::map<std::string, int> wnid_to_label;
        int next_label = 0;
        for (const auto& wnid : sorted_dirs(base / "train"))
            wnid_to_label[wnid.filename().string()] = next_label++;
        std::ifstream f(ann);
        std::string line;
        while (std::getline(f, line)) {
            std::istringstream ss(line);
            std::string file, wnid;
            ss >> file >> wnid;
            if (file.empty()) continue;
            auto it = wnid_to_label.find(wnid);
            if (it == wnid_to_label.end())
                throw IngestionError("tiny_imagenet: unknown wnid in " + ann.string());
            d.add(decode_resized(base / "val" / "images" / file, res), it->second, id++);
        }
    }
    return d;
}

// No canonical split is published; stratified 80/20 from a fixed seed.
Dataset load_caltech101(const std::string& root, Split split) {
    const fs::path base = fs::path(root) / "101_ObjectCategories";
    const auto classes = sorted_dirs(base);
    const int res = 64;
    Dataset d("caltech101", 3, res, res, static_cast<int>(classes.size()));
    int64_t id = 0;
    int label = 0;
    constexpr uint64_t kSplitSeed = 0xca17ec5;
    for (const auto& cls : classes) {
        const auto files = sorted_files(cls);
        std::vector<size_t> order(files.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = make_rng({kSplitSeed, static_cast<uint64_t>(label)});
        std::shuffle(order.begin(), order.end(), rng);
        const size_t n_train = (files.size() * 8) / 10;
        for (size_t i = 0; i < order.size(); ++i) {
            const bool in_train = i < n_train;
            if ((split == Split::kTrain) != in_train) continue;
            d.add(decode_resized(files[order[i]], res), label, id);
            ++id;
        }
        ++label;
    }
    return d;
}

}  // namespace

Dataset load_dataset(const std::string& name, const std::string& root, Split split,
                     std::optional<size_t> limit) {
    Dataset d = [&] {
        if (name == "cifar10") return load_cifar10(root, split);
        if (name == "cifar100") return load_cifar100(root, split);
        if (name == "tiny_imagenet") return load_tiny_imagenet(root, split);
        if (name == "caltech101") return load_caltech101(root, split);
        throw ConfigError("unknown dataset id: " + name);
    }();
    if (limit) d.truncate(*limit);
    return d;
}

}  // namespace affssl
