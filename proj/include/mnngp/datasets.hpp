#pragma once

// MNIST (IDX), CIFAR-10 (binary batches) and CSV datasets, plus the
// shuffle/split protocol. Pixels are scaled by 1/255 into [0, 1].

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mnngp/kernel.hpp"

namespace mnngp {

struct Dataset {
  Matrix inputs;            ///< n x d
  std::vector<int> labels;  ///< length n, each in [0, n_classes)
  int n_classes = 0;
  std::string provenance;

  Eigen::Index size() const noexcept { return inputs.rows(); }
  Eigen::Index dim() const noexcept { return inputs.cols(); }
  /// Throws FormatError if shapes disagree or a label is out of range.
  void validate() const;
  /// Rows in the given order.
  Dataset subset(const std::vector<std::size_t>& rows, const std::string& tag) const;
};

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path);

/// Record layout: 1 label byte + 3072 pixel bytes, channel-major as stored.
Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths);

/// Label column first, then feature columns; no header. n_classes = 0 infers
/// max(label) + 1.
Dataset load_dataset_csv(const std::filesystem::path& path, int n_classes = 0);
Dataset read_dataset_csv(std::istream& in, const std::string& source, int n_classes = 0);
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
void write_dataset_csv(const Dataset& data, std::ostream& out);

/// Uniform integer in [0, bound) from a 64-bit Mersenne Twister by rejection
/// sampling; unlike std::uniform_int_distribution the sequence is fixed.
std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t bound);

/// Fisher-Yates permutation of 0..n-1 driven by mt19937_64(seed).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Shuffle, then train = first n_t rows and validation = next n_v rows.
std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t n_t, std::size_t n_v,
                                  std::uint64_t seed);

}  // namespace mnngp
