#include "mnngp/datasets.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "mnngp/errors.hpp"
#include "mnngp/matrix_io.hpp"

namespace mnngp {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw FormatError(provenance + ": " + std::to_string(inputs.rows()) + " rows but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw FormatError(provenance + ": label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows, const std::string& tag) const {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = labels[rows[i]];
  }
  out.n_classes = n_classes;
  out.provenance = provenance + tag;
  return out;
}

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void idx_fail(const fs::path& path, std::size_t offset, const std::string& what) {
  throw FormatError(path.string() + ": offset " + std::to_string(offset) + ": " + what);
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const fs::path& path) {
  if (offset + 4 > buf.size()) idx_fail(path, offset, "truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

constexpr std::uint32_t kIdxImages = 2051;
constexpr std::uint32_t kIdxLabels = 2049;
constexpr double kPixelScale = 1.0 / 255.0;

}  // namespace

Dataset load_mnist(const fs::path& images_path, const fs::path& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImages) {
    idx_fail(images_path, 0, "bad magic " + std::to_string(img_magic) + " (expected 2051)");
  }
  const std::uint32_t n = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::size_t d = std::size_t{rows} * cols;
  const std::size_t need = 16 + std::size_t{n} * d;
  if (img.size() < need) {
    idx_fail(images_path, img.size(), "truncated pixel data (need " + std::to_string(need) + " bytes)");
  }

  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabels) {
    idx_fail(labels_path, 0, "bad magic " + std::to_string(lab_magic) + " (expected 2049)");
  }
  const std::uint32_t n_lab = read_be32(lab, 4, labels_path);
  if (n_lab != n) {
    idx_fail(labels_path, 4, "label count " + std::to_string(n_lab) + " != image count " +
                                 std::to_string(n));
  }
  if (lab.size() < 8 + std::size_t{n}) idx_fail(labels_path, lab.size(), "truncated label data");

  Dataset out;
  out.inputs.resize(n, static_cast<Eigen::Index>(d));
  out.labels.resize(n);
  out.n_classes = 10;
  out.provenance = "mnist:" + images_path.filename().string();
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + 16 + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] * kPixelScale;
    }
    const int label = lab[8 + i];
    if (label > 9) idx_fail(labels_path, 8 + i, "label " + std::to_string(label) + " > 9");
    out.labels[i] = label;
  }
  return out;
}

Dataset load_cifar10(const std::vector<fs::path>& batch_paths) {
  constexpr std::size_t kPixels = 3072;
  constexpr std::size_t kRecord = 1 + kPixels;
  if (batch_paths.empty()) throw UsageError("load_cifar10: empty batch list");
  std::vector<std::vector<unsigned char>> files;
  std::size_t total = 0;
  for (const auto& p : batch_paths) {
    files.push_back(read_bytes(p));
    if (files.back().size() % kRecord != 0) {
      throw FormatError(p.string() + ": size " + std::to_string(files.back().size()) +
                        " is not a multiple of 3073");
    }
    total += files.back().size() / kRecord;
  }
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(total), kPixels);
  out.labels.resize(total);
  out.n_classes = 10;
  out.provenance = "cifar10:" + batch_paths.front().filename().string() +
                   (batch_paths.size() > 1 ? "+" + std::to_string(batch_paths.size() - 1) : "");
  std::size_t row = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& buf = files[f];
    for (std::size_t r = 0; r < buf.size() / kRecord; ++r, ++row) {
      const unsigned char* rec = buf.data() + r * kRecord;
      if (rec[0] > 9) {
        throw FormatError(batch_paths[f].string() + ": offset " + std::to_string(r * kRecord) +
                          ": label " + std::to_string(rec[0]) + " > 9");
      }
      out.labels[row] = rec[0];
      for (std::size_t j = 0; j < kPixels; ++j) {
        out.inputs(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = rec[1 + j] * kPixelScale;
      }
    }
  }
  return out;
}

Dataset read_dataset_csv(std::istream& in, const std::string& source, int n_classes) {
  const Matrix raw = read_matrix_csv(in, source);
  if (raw.cols() < 2) throw FormatError(source + ": need a label column and >= 1 feature");
  Dataset out;
  out.inputs = raw.rightCols(raw.cols() - 1);
  out.labels.resize(raw.rows());
  int max_label = -1;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double v = raw(i, 0);
    if (!(v >= 0.0) || v != std::floor(v) || v > std::numeric_limits<int>::max()) {
      throw FormatError(source + ":" + std::to_string(i + 1) + ": label must be a non-negative integer");
    }
    out.labels[i] = static_cast<int>(v);
    max_label = std::max(max_label, out.labels[i]);
  }
  out.n_classes = n_classes > 0 ? n_classes : max_label + 1;
  out.provenance = "csv:" + source;
  out.validate();
  return out;
}

Dataset load_dataset_csv(const fs::path& path, int n_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_dataset_csv(in, path.string(), n_classes);
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << ',' << format_real17(data.inputs(i, j));
    out << '\n';
  }
}

void save_dataset_csv(const Dataset& data, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_dataset_csv(data, out);
}

std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t bound) {
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = bounded_uniform(rng, i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t n_t, std::size_t n_v,
                                  std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(data.size());
  if (n_t + n_v > n) {
    throw UsageError("split: n_t + n_v = " + std::to_string(n_t + n_v) + " exceeds " +
                     std::to_string(n) + " rows");
  }
  const auto idx = shuffled_indices(n, seed);
  const std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<long>(n_t));
  const std::vector<std::size_t> va(idx.begin() + static_cast<long>(n_t),
                                    idx.begin() + static_cast<long>(n_t + n_v));
  return {data.subset(tr, "[train]"), data.subset(va, "[val]")};
}

}  // namespace mnngp
