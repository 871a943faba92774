#pragma once

// Finite-width maxout networks at initialization.
//
//   z^0 = W^0 x + b^0,  x^l_k = max_m z^{l-1}_{k,m},  z^l = W^l x^l + b^l,
//
// with W^l entries N(0, sigma_w2 / fan_in) (fan_in = d_in for l = 0, N_l after)
// and biases N(0, sigma_b2). The output z^L has covariance K^L as widths grow.

#include <cstdint>
#include <vector>

#include "mnngp/execution.hpp"
#include "mnngp/fq_table.hpp"
#include "mnngp/kernel.hpp"

namespace mnngp {

struct NetworkArch {
  int d_in = 1;
  std::vector<int> widths;  ///< N_1 .. N_L
  int q = 1;
  int d_out = 1;
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;

  int depth() const noexcept { return static_cast<int>(widths.size()); }
  void validate() const;
  KernelParams kernel_params() const;
  static NetworkArch uniform(int d_in, int width, int depth, int q, double sigma_b2,
                             double sigma_w2, int d_out = 1);
};

/// One network with explicitly drawn weights, evaluated on every row of X.
/// Returns n x d_out. Deterministic in seed.
Matrix sample_and_forward(const NetworkArch& arch, const Matrix& X, std::uint64_t seed);

enum class SamplerMethod {
  /// Draws every weight matrix; cost O(n * N_l * N_{l+1} * q) per layer.
  explicit_weights,
  /// Draws each layer's pre-activations jointly over the n inputs from their
  /// exact conditional law N(0, sigma_w2 / N_l * A A^T + sigma_b2), A the
  /// previous layer's activations; cost O(n^2 * N_{l+1} * q) per layer.
  gram,
};

enum class OutputEstimator {
  /// Average of z z^T over the sampled outputs.
  sampled,
  /// Average of E[z z^T | last hidden layer] = sigma_w2 / N_L * A A^T + sigma_b2:
  /// the output weights are integrated out exactly. Same expectation, and the
  /// noise shrinks with width as well as with the number of networks.
  conditional,
};

struct EmpiricalKernel {
  Matrix second_moment;  ///< (1/S) sum_s z^(s) z^(s)^T over d_out = 1 outputs
  Matrix std_error;      ///< entrywise standard error of the mean
  long n_networks = 0;
};

/// Requires arch.d_out == 1 and n_networks >= 100. Network s is seeded with
/// derive_seed(seed, s); the sum over networks is taken in index order, so the
/// result does not depend on exec.
EmpiricalKernel empirical_kernel(const NetworkArch& arch, const Matrix& X, long n_networks,
                                 std::uint64_t seed, SamplerMethod method = SamplerMethod::gram,
                                 OutputEstimator estimator = OutputEstimator::sampled,
                                 Execution exec = Execution::parallel);

/// ||K_emp - K_theory||_F / ||K_theory||_F.
double relative_frobenius_gap(const Matrix& empirical, const Matrix& theory);

/// relative_frobenius_gap(empirical_kernel(...), kernel_matrix(X, params, table)).
/// arch and params must agree on q, depth, sigma_b2 and sigma_w2.
double theorem1_gap(const NetworkArch& arch, const KernelParams& params, const FqTable& table,
                    const Matrix& X, long n_networks, std::uint64_t seed,
                    SamplerMethod method = SamplerMethod::gram,
                    OutputEstimator estimator = OutputEstimator::sampled,
                    Execution exec = Execution::parallel);

}  // namespace mnngp
