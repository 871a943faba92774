#pragma once

// Compositional maxout NNGP kernel.
//
// With G(k) = sigma_b2 + sigma_w2 * k and H(a, b, c) = sqrt(a b) F_q(c / sqrt(a b)),
// the depth-L output covariance is G o (H o G)^L applied to K0 = <x, x'> / d.
// next_layer() is one G o H o G step; kernel_matrix() tracks the two diagonal
// trajectories and the cross term layer by layer.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mnngp/execution.hpp"
#include "mnngp/fq_table.hpp"

namespace mnngp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct KernelParams {
  int q = 2;
  int depth = 1;
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;

  /// Throws UsageError unless q >= 1, depth >= 1, sigma_b2 >= 0, sigma_w2 >= 0
  /// and sigma_b2 + sigma_w2 > 0.
  void validate() const;
};

struct KernelMatrix {
  Matrix values;
  bool symmetric = false;
  /// Pre-activation second moments E[z(x)^2] per layer, l = 0..depth, for the
  /// rows of X and of Y. values' diagonal (when symmetric) equals diag_x.back().
  std::vector<Vector> diag_x;
  std::vector<Vector> diag_y;
};

/// Correlations may exceed [-1, 1] by this much before clamping.
inline constexpr double kCorrelationBand = 1e-9;

/// <x, x'> / d. Throws UsageError on dimension mismatch or empty vectors.
double k0(std::span<const double> x, std::span<const double> x_prime);

/// All pairwise k0 values, X * Y^T / d. Entry (i, j) depends only on rows
/// X_i and Y_j, bit for bit.
Matrix k0_matrix(const Matrix& X, const Matrix& Y, Execution exec = Execution::parallel);

/// sigma_b2 + sigma_w2 sqrt(a b) F_q(c / sqrt(a b)) with a, b, c = G(k_xx), G(k_yy), G(k_xy).
/// Throws DegenerateInputError (row -1) if a or b is not positive.
double next_layer(double k_xx, double k_xy, double k_yy, const KernelParams& params,
                  const FqTable& table);

/// Pre-activation second-moment trajectory E[z^l(x)^2], l = 0..depth.
std::vector<double> diagonal_trajectory(double k0_xx, const KernelParams& params,
                                        const FqTable& table);

/// K^L over X (n x d) and Y (m x d). Pass the same object as X and Y (or set
/// same_points) to get the symmetric form assembled from one triangle.
KernelMatrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelParams& params,
                           const FqTable& table, Execution exec = Execution::parallel);
KernelMatrix kernel_matrix(const Matrix& X, const KernelParams& params, const FqTable& table,
                           Execution exec = Execution::parallel);

/// ReLU NNGP kernel: K0 = s_b + s_w <x, x'>/d, then
/// K^l = s_b + s_w / (2 pi) sqrt(K_xx K_yy) (sin t + (pi - t) cos t), t = arccos(rho).
Matrix relu_nngp_kernel(const Matrix& X, const Matrix& Y, int depth, double sigma_b2_t,
                        double sigma_w2_t);

/// max |kernel_matrix(X, X) - relu_nngp_kernel(X / sqrt2, X / sqrt2, L, s_b, 2 s_w)|.
/// Requires params.q == 2 and table.q() == 2.
double prop1_residual(const Matrix& X, const KernelParams& params, const FqTable& table);

namespace reference {

/// Entry by entry, serially: each value walks its own (xx, xy, yy) triple
/// through L - 1 steps of H o G followed by next_layer.
Matrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelParams& params,
                     const FqTable& table);

}  // namespace reference

}  // namespace mnngp
