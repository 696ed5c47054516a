#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "awm/idx.hpp"

namespace awm {

enum class DatasetName { MNIST, FMNIST };

inline std::string to_string(DatasetName n) { return n == DatasetName::MNIST ? "mnist" : "fmnist"; }

inline DatasetName dataset_from_string(const std::string& s) {
    if (s == "mnist" || s == "MNIST") return DatasetName::MNIST;
    if (s == "fmnist" || s == "FMNIST" || s == "fashion-mnist") return DatasetName::FMNIST;
    throw ConfigError("unknown dataset '" + s + "' (expected mnist or fmnist)");
}

// Each task uses the other dataset as its out-of-distribution source.
inline DatasetName ood_counterpart(DatasetName n) {
    return n == DatasetName::MNIST ? DatasetName::FMNIST : DatasetName::MNIST;
}

struct ImageDataset {
    Tensor images;            // [N,1,28,28], values in [0,1]
    std::vector<int> labels;  // in [0,9]
    DatasetName name = DatasetName::MNIST;
    std::vector<int> source_index;  // index of each item in its source IDX file

    int count() const { return images.shape.empty() ? 0 : images.dim(0); }

    void validate() const {
        if (count() != static_cast<int>(labels.size()))
            throw DataError("dataset: image/label count mismatch");
        check_labels(labels);
        for (float v : images.data)
            if (!(v >= 0.0f && v <= 1.0f)) throw DataError("dataset: pixel outside [0,1]");
    }

    // Copies item i into a [1,28,28] tensor.
    Tensor item(int i) const {
        Tensor t({1, 28, 28});
        std::copy(images.ptr() + static_cast<size_t>(i) * 784,
                  images.ptr() + static_cast<size_t>(i + 1) * 784, t.ptr());
        return t;
    }

    ImageDataset subset(const std::vector<int>& idx) const {
        ImageDataset out;
        out.name = name;
        out.images = Tensor({static_cast<int>(idx.size()), 1, 28, 28});
        out.labels.resize(idx.size());
        out.source_index.resize(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            const int s = idx[i];
            std::copy(images.ptr() + static_cast<size_t>(s) * 784,
                      images.ptr() + static_cast<size_t>(s) * 784 + 784,
                      out.images.ptr() + i * 784);
            out.labels[i] = labels[s];
            out.source_index[i] = source_index.empty() ? s : source_index[s];
        }
        return out;
    }
};

// How the two source files are carved into experiment splits. train and
// finetune_add come from the training file; test and steal_seed come from
// the held-out test file. All four are pairwise disjoint.
struct SplitPlan {
    int train_count = 10000;
    int test_count = 2000;
    int finetune_count = 10000;
    int steal_seed_count = 150;
    uint64_t seed = 0;
};

struct DatasetSplits {
    ImageDataset train;
    ImageDataset test;
    ImageDataset finetune_add;
    ImageDataset steal_seed;
};

namespace detail {

inline std::string find_idx_file(const std::filesystem::path& dir, const std::string& stem,
                                 const std::string& kind) {
    // Accept the two filename conventions in circulation.
    for (const char* sep : {"-", "."}) {
        std::filesystem::path p = dir / (stem + sep + kind + "-ubyte");
        if (std::filesystem::exists(p)) return p.string();
    }
    throw DataError("missing dataset file: " + (dir / (stem + "-" + kind + "-ubyte")).string());
}

inline ImageDataset load_idx_pair(const std::filesystem::path& dir, const std::string& images_stem,
                                  const std::string& labels_stem, DatasetName name) {
    ImageDataset d;
    d.name = name;
    d.images = parse_idx_images(read_file(find_idx_file(dir, images_stem, "idx3")));
    d.labels = parse_idx_labels(read_file(find_idx_file(dir, labels_stem, "idx1")));
    if (d.count() != static_cast<int>(d.labels.size()))
        throw DataError("dataset: image/label count mismatch in " + dir.string());
    d.source_index.resize(d.count());
    for (int i = 0; i < d.count(); ++i) d.source_index[i] = i;
    return d;
}

}  // namespace detail

inline std::filesystem::path dataset_dir(const std::string& root, DatasetName name) {
    std::filesystem::path base(root);
    for (const std::string& cand : {to_string(name), std::string(name == DatasetName::MNIST ? "MNIST" : "FMNIST")}) {
        if (std::filesystem::exists(base / cand)) return base / cand;
    }
    return base / to_string(name);
}

inline ImageDataset load_train_file(const std::string& root, DatasetName name) {
    return detail::load_idx_pair(dataset_dir(root, name), "train-images", "train-labels", name);
}

inline ImageDataset load_test_file(const std::string& root, DatasetName name) {
    return detail::load_idx_pair(dataset_dir(root, name), "t10k-images", "t10k-labels", name);
}

// Seeded shuffle, then disjoint slices per the plan. The same plan and seed
// always produce the same splits.
inline DatasetSplits load_dataset(DatasetName name, const std::string& root, const SplitPlan& plan) {
    ImageDataset train_file = load_train_file(root, name);
    ImageDataset test_file = load_test_file(root, name);
    train_file.validate();
    test_file.validate();

    if (plan.train_count + plan.finetune_count > train_file.count())
        throw ConfigError("split plan exceeds training file size (" +
                          std::to_string(plan.train_count) + "+" +
                          std::to_string(plan.finetune_count) + " > " +
                          std::to_string(train_file.count()) + ")");
    if (plan.test_count + plan.steal_seed_count > test_file.count())
        throw ConfigError("split plan exceeds test file size");

    std::vector<int> train_ix(train_file.count());
    for (size_t i = 0; i < train_ix.size(); ++i) train_ix[i] = static_cast<int>(i);
    Rng train_rng(derive_seed(plan.seed, "split/" + to_string(name) + "/train"));
    train_rng.shuffle(train_ix);

    std::vector<int> test_ix(test_file.count());
    for (size_t i = 0; i < test_ix.size(); ++i) test_ix[i] = static_cast<int>(i);
    Rng test_rng(derive_seed(plan.seed, "split/" + to_string(name) + "/test"));
    test_rng.shuffle(test_ix);

    auto slice = [](const std::vector<int>& ix, int begin, int count) {
        return std::vector<int>(ix.begin() + begin, ix.begin() + begin + count);
    };

    DatasetSplits s;
    s.train = train_file.subset(slice(train_ix, 0, plan.train_count));
    s.finetune_add = train_file.subset(slice(train_ix, plan.train_count, plan.finetune_count));
    s.test = test_file.subset(slice(test_ix, 0, plan.test_count));
    s.steal_seed = test_file.subset(slice(test_ix, plan.test_count, plan.steal_seed_count));
    return s;
}

}  // namespace awm
