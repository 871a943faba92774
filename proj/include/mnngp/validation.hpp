#pragma once

// Invariant and oracle suites behind `mnngp validate` and the acceptance run.
// Each suite returns one CheckResult per property; nothing throws on a failed
// check.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mnngp/fq_table.hpp"
#include "mnngp/kernel.hpp"
#include "mnngp/mc_validation.hpp"

namespace mnngp {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
  /// Informational lines never fail a suite.
  bool informational = false;
  /// How measured compares with threshold when passing: "<=", ">=" or "==".
  std::string relation = "<=";
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  /// "PASS|FAIL|INFO  name  measured <relation> threshold  detail", one per check.
  std::string format() const;
};

/// Lazily built F_q tables shared between suites. A table is built with the
/// given grid the first time it is requested, unless one was supplied.
class TableCache {
public:
  explicit TableCache(QuadratureGrid grid = QuadratureGrid::high_accuracy(),
                      Execution exec = Execution::parallel)
      : grid_(grid), exec_(exec) {}

  void insert(FqTable table);
  /// Table for q with exactly n_rho nodes on the cache's grid.
  const FqTable& get(int q, int n_rho);
  /// Wall-clock seconds spent building (q, n_rho); 0 if it was supplied.
  double build_seconds(int q, int n_rho) const;
  const QuadratureGrid& grid() const noexcept { return grid_; }
  Execution execution() const noexcept { return exec_; }

private:
  struct Entry {
    std::unique_ptr<FqTable> table;
    double seconds = 0.0;
  };
  QuadratureGrid grid_;
  Execution exec_;
  std::vector<std::pair<std::pair<int, int>, Entry>> entries_;
};

/// Portable uniform double in [lo, hi) from a 64-bit Mersenne Twister.
double portable_uniform(std::uint64_t bits, double lo, double hi) noexcept;
Matrix portable_uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi,
                               std::uint64_t seed);

struct FqSuiteOptions {
  bool closed_form = true;
  int n_rho = 1001;
  double threshold = 1e-3;
  double max_build_seconds = 120.0;
  bool report_published_grid = true;
  std::vector<int> mc_qs = {3, 4};
  std::vector<double> mc_rhos = {-1.0, -0.9, -0.5, 0.0, 0.5, 0.9, 1.0};
  std::int64_t mc_samples = 10'000'000;
  double mc_sigmas = 3.0;
  /// Nodes of the q = 3, 4 tables; must place every mc_rho on a node.
  int mc_table_n_rho = 201;
  double max_mc_seconds = 300.0;
  std::uint64_t seed = 20240601;
};

/// Closed-form F_2 agreement, published-grid deviation, and F_3 / F_4 against
/// Monte Carlo.
SuiteReport validate_fq(TableCache& tables, const FqSuiteOptions& options = {});

struct Prop1Options {
  std::vector<int> depths = {1, 5, 9, 13, 17, 21};
  int n_sets = 10;
  int n_sigma = 5;
  Eigen::Index rows = 20;
  Eigen::Index cols = 10;
  double sigma_b2_max = 2.0;
  double sigma_w2_min = 0.1;
  double sigma_w2_max = 1.0;
  double threshold = 1e-3;
  int n_rho = 1001;
  std::uint64_t seed = 20240602;
};

/// max prop1_residual over every (depth, input set, sigma pair).
SuiteReport validate_prop1(TableCache& tables, const Prop1Options& options = {});

struct Theorem1Options {
  int width = 2048;
  int reference_width = 128;
  int depth = 2;
  int q = 3;
  Eigen::Index n_inputs = 8;
  Eigen::Index d_in = 16;
  long n_networks = 20000;
  int n_seeds = 5;
  double sigma_b2 = 0.1;
  double sigma_w2 = 2.0;
  double gap_threshold = 0.05;
  double ratio_threshold = 0.5;
  double max_seconds = 600.0;
  SamplerMethod method = SamplerMethod::gram;
  OutputEstimator estimator = OutputEstimator::conditional;
  int n_rho = 1001;
  std::uint64_t seed = 20240603;
};

/// Five-seed mean gaps at width and reference_width, and their ratio.
SuiteReport validate_theorem1(TableCache& tables, const Theorem1Options& options = {});

/// Jitter escalation on a rank-deficient kernel and exhaustion on an
/// indefinite one.
SuiteReport validate_jitter();

struct PropertyOptions {
  std::uint64_t seed = 20240604;
  std::int64_t mc_samples = 10'000'000;
};

/// Every invariant of special functions, F_q tables, kernels, GP regression
/// and datasets. Dataset scaling runs on synthetic IDX / CIFAR files.
SuiteReport validate_properties(TableCache& tables, const PropertyOptions& options = {});

}  // namespace mnngp
