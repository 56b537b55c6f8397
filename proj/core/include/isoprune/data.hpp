#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isoprune/tensor.hpp"

namespace isoprune {

enum class Split { train, test };

struct Dataset {
    Tensor images;            // N x 1 x 28 x 28, normalized floats
    std::vector<int> labels;  // N values in 0..9
    Split split = Split::train;
    // Normalization constants; computed from the training split and reused
    // verbatim for test.
    double norm_mean = 0.0;
    double norm_std = 1.0;

    std::size_t size() const { return labels.size(); }
};

struct RawImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count*rows*cols bytes
};

// IDX container parsing, big-endian headers, bit-exact.
// Image magic 2051, label magic 2049.
RawImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);

// Debug helpers for round-trip checks.
void save_idx_images(const std::string& path, const RawImages& raw);
void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

struct NormStats {
    double mean = 0.0;
    double std_dev = 1.0;
};

// Byte statistics of x/255 over a whole split.
NormStats compute_norm_stats(const RawImages& raw);

// x -> (x/255 - mean)/std, producing an N x 1 x 28 x 28 tensor.
Tensor normalize(const RawImages& raw, const NormStats& stats);

// Loads the four standard files from `dir`:
//   train-images-idx3-ubyte, train-labels-idx1-ubyte,
//   t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
// Normalization constants come from the training split.
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

// Deterministic synthetic fallback: seeded Gaussian class blobs rendered to
// bytes, then pushed through the same normalize path as real data.
std::pair<Dataset, Dataset> synthetic_dataset(std::size_t train_count, std::size_t test_count,
                                              std::uint64_t seed);

// Deterministic shuffle keyed by (seed, epoch); the last partial batch is
// kept. Returns index batches into the dataset.
std::vector<std::vector<std::size_t>> batches(const Dataset& dataset, std::size_t batch_size,
                                              std::uint64_t seed, int epoch);

// Gathers one index batch into a B x 1 x 28 x 28 tensor plus labels.
std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& dataset,
                                                 const std::vector<std::size_t>& indices);

}  // namespace isoprune
