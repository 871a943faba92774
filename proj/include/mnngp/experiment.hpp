#pragma once

// Experiment configuration, grid enumeration, and the split -> kernel ->
// posterior -> accuracy pipeline shared by `infer` and `gridsearch`.
//
// Repeat r of grid cell c uses seed derive_seed(derive_seed(seed, c), r); a
// single run of `infer` is cell 0.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mnngp/datasets.hpp"
#include "mnngp/fq_table.hpp"
#include "mnngp/kernel.hpp"

namespace mnngp {

struct DatasetSpec {
  std::string kind = "csv";  ///< mnist | cifar10 | csv
  std::vector<std::string> train_images;
  std::vector<std::string> train_labels;
  std::vector<std::string> test_images;
  std::vector<std::string> test_labels;
  std::size_t n_train = 1000;
  std::size_t n_val = 1000;
  std::size_t n_test = 0;  ///< 0 = the whole test set
  int repeats = 5;
};

struct GridSpec {
  std::vector<int> q;
  std::vector<int> depth;
  std::vector<double> sigma_b2;
  std::vector<double> sigma_w2;

  /// q in {2,3,4}, depth in {1,5,...,21}, sigma_b2 = 2i/29 for i = 1,5,...,29,
  /// sigma_w2 = 0.1 + 49i/290 for i = 0,4,...,28: 3 * 6 * 8 * 8 = 1152 cells.
  static GridSpec published();
  std::size_t size() const noexcept {
    return q.size() * depth.size() * sigma_b2.size() * sigma_w2.size();
  }
};

struct TableSpec {
  std::map<int, std::string> paths;  ///< q -> table file; other q are built
  int n_rho = 1001;
  double r_max = 8.0;
  int n_grid = 2001;
  QuadratureScheme scheme = QuadratureScheme::product;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  GridSpec grid = GridSpec::published();
  TableSpec table;
  double noise0 = 1e-10;
  std::uint64_t seed = 0;
  std::string output;

  /// Throws UsageError on empty grid sets, repeats < 1, bad kinds or values.
  void validate() const;
};

/// JSON text of the fully resolved configuration (every field present).
std::string config_to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types throw
/// FormatError naming the key.
ExperimentConfig config_from_json(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

struct GridCell {
  std::size_t index = 0;
  int q = 2;
  int depth = 1;
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;
};

/// Cells in order q, depth, sigma_b2, sigma_w2 (last varies fastest);
/// budget > 0 keeps the first `budget` cells.
std::vector<GridCell> enumerate_cells(const GridSpec& grid, std::size_t budget = 0);

struct LoadedData {
  Dataset pool;                 ///< source of train / validation splits
  std::optional<Dataset> test;  ///< held-out test set, if configured
};

LoadedData load_data(const DatasetSpec& spec);

/// Loads tables named in a TableSpec, building the rest on first use.
class TableProvider {
public:
  explicit TableProvider(TableSpec spec, Execution exec = Execution::parallel)
      : spec_(std::move(spec)), exec_(exec) {}
  /// Throws UsageError if a loaded table's q disagrees with its key.
  const FqTable& get(int q);

private:
  TableSpec spec_;
  Execution exec_;
  std::map<int, std::unique_ptr<FqTable>> tables_;
};

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::optional<double> val_accuracy;
  std::optional<double> test_accuracy;
  double noise_used = 0.0;
  int escalations = 0;
};

struct CellResult {
  GridCell cell;
  std::vector<RepeatResult> repeats;
  bool ok = true;
  std::string error;  ///< first failure, when !ok
  std::optional<double> mean_val;
  std::optional<double> mean_test;

  /// Validation mean if a validation split exists, else the test mean.
  std::optional<double> score() const { return mean_val ? mean_val : mean_test; }
};

/// Runs every repeat of one cell. Conditioning and degenerate-input failures
/// end the cell with ok = false and null means rather than throwing.
CellResult evaluate_cell(const GridCell& cell, const LoadedData& data, const DatasetSpec& spec,
                         const FqTable& table, double noise0, std::uint64_t seed,
                         Execution exec = Execution::parallel);

struct GridReport {
  ExperimentConfig config;
  std::size_t budget = 0;
  std::vector<CellResult> cells;  ///< cell order
  std::vector<std::size_t> ranking;  ///< positions in cells, best first; failed cells last
};

using CellCallback = std::function<void(const CellResult&)>;

GridReport run_gridsearch(const ExperimentConfig& config, const LoadedData& data,
                          TableProvider& tables, std::size_t budget = 0,
                          Execution exec = Execution::parallel, const CellCallback& progress = {});

/// {"command", "config", "budget", "cells", "ranking", "best"}.
std::string gridsearch_report_json(const GridReport& report);
/// {"command", "config", "cell"}; "cell" has the same form as in gridsearch.
std::string infer_report_json(const ExperimentConfig& config, const CellResult& cell);
/// rank,index,q,depth,sigma_b2,sigma_w2,status,mean_val_accuracy,mean_test_accuracy,max_escalations
std::string ranked_csv(const GridReport& report);

}  // namespace mnngp
