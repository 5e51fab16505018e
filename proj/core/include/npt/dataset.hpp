#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npt/tensor.hpp"

namespace npt {

// A labeled image set held in memory: images (N,C,H,W) in [0,1], integer
// labels in [0, num_classes).
struct LabeledImages {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;

    int size() const { return images.defined() ? images.shape()[0] : 0; }
    int channels() const { return images.shape()[1]; }
    int height() const { return images.shape()[2]; }
    int width() const { return images.shape()[3]; }

    LabeledImages subset(const std::vector<int>& indices) const;
};

struct SplitSizes {
    int train = 5000;
    int val = 1000;
    int test = 2000;
};

struct DatasetSplits {
    LabeledImages train, val, test;
};

// CIFAR-10 binary layout: 3073-byte records, 1 label byte + 3 channel planes
// of 1024 bytes each, row-major. `path` may be a directory holding the
// standard batch files or a single .bin file.
LabeledImages load_cifar10_file(const std::string& path);
DatasetSplits load_cifar10(const std::string& path, const SplitSizes& sizes, std::uint64_t seed);

// Seed-deterministic stratified subsample without replacement; class counts
// equal up to +-1. Draws `count` points disjoint from `exclude`.
std::vector<int> stratified_indices(const std::vector<int>& labels, int num_classes, int count,
                                    std::uint64_t seed, const std::vector<int>& exclude = {});

// Synthetic 3-class 32x32 dataset (disk, square, cross) on a noisy
// background. Images cycle through cue modes (shape+tint, shape-only,
// color-only) so class evidence is not redundant. Fully deterministic
// in (n, seed).
LabeledImages synthetic_shapes(int n, std::uint64_t seed);

// Two-class, linearly separable variant used by convergence tests.
LabeledImages synthetic_shapes_easy(int n, std::uint64_t seed);

DatasetSplits synthetic_splits(const SplitSizes& sizes, std::uint64_t seed);

// ---- raw tensor files ("NPTT") ----------------------------------------------
// magic "NPTT" | u8 dtype (0=f32, 1=i32) | u8 rank | u32 dims | payload, all
// little-endian.

void save_raw_tensor(const std::string& path, const Tensor& t);
Tensor load_raw_tensor(const std::string& path);
void save_raw_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> load_raw_labels(const std::string& path);

// Directory with images.nptt + labels.nptt.
LabeledImages load_raw_dir(const std::string& dir, int num_classes);
void save_raw_dir(const std::string& dir, const LabeledImages& data);

}  // namespace npt
