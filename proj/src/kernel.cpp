#include "mnngp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mnngp/errors.hpp"

namespace mnngp {

void KernelParams::validate() const {
  std::ostringstream msg;
  if (q < 1) msg << "maxout rank q must be >= 1 (got " << q << ")";
  else if (depth < 1) msg << "depth must be >= 1 (got " << depth << ")";
  else if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) msg << "sigma_b2 must be >= 0";
  else if (!(sigma_w2 >= 0.0) || !std::isfinite(sigma_w2)) msg << "sigma_w2 must be >= 0";
  else if (!(sigma_b2 + sigma_w2 > 0.0)) msg << "sigma_b2 + sigma_w2 must be > 0";
  else return;
  throw UsageError("KernelParams: " + msg.str());
}

namespace {

void check_table(const KernelParams& params, const FqTable& table) {
  params.validate();
  if (table.q() != params.q) {
    throw UsageError("table has q=" + std::to_string(table.q()) + " but params.q=" +
                     std::to_string(params.q));
  }
}

double clamped_correlation(double c, double a, double b, long row, long col, int layer) {
  const double rho = c / std::sqrt(a * b);
  if (!(std::abs(rho) <= 1.0 + kCorrelationBand)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "correlation " << rho << " outside [-1, 1] at entry (" << row << ", " << col
        << "), layer " << layer << " (c=" << c << ", a=" << a << ", b=" << b << ")";
    throw DomainError(msg.str());
  }
  return std::clamp(rho, -1.0, 1.0);
}

[[noreturn]] void degenerate(long row) {
  throw DegenerateInputError(
      "zero second moment at row " + std::to_string(row) +
          " (zero-norm input with sigma_b2 = 0 makes the correlation 0/0)",
      row);
}

// One H step on pre-activation moments followed by G: sigma_b2 + sigma_w2 sqrt(ab) F(rho).
double fq_step(double a, double b, double c, const KernelParams& p, const FqTable& table,
               long row, long col, int layer) {
  const double rho = clamped_correlation(c, a, b, row, col, layer);
  return p.sigma_b2 + p.sigma_w2 * std::sqrt(a * b) * table.interpolate(rho);
}

// Same arithmetic as the diagonal of k0_matrix(X, X).
Vector k0_diagonal(const Matrix& X) {
  const Matrix Xt = X.transpose();
  Vector out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = Xt.col(i).dot(Xt.col(i)) / X.cols();
  return out;
}

std::vector<Vector> trajectories(const Matrix& X, const KernelParams& p, const FqTable& table) {
  const Eigen::Index n = X.rows();
  const Vector base = k0_diagonal(X);
  std::vector<Vector> diag(p.depth + 1, Vector(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    diag[0](i) = p.sigma_b2 + p.sigma_w2 * base(i);
    if (!(diag[0](i) > 0.0)) degenerate(i);
    for (int l = 1; l <= p.depth; ++l) {
      const double a = diag[l - 1](i);
      diag[l](i) = p.sigma_b2 + p.sigma_w2 * a * table.interpolate(1.0);
    }
  }
  return diag;
}

}  // namespace

double k0(std::span<const double> x, std::span<const double> x_prime) {
  if (x.size() != x_prime.size()) {
    throw UsageError("k0: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                     std::to_string(x_prime.size()) + ")");
  }
  if (x.empty()) throw UsageError("k0: empty input vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x_prime[i];
  return acc / static_cast<double>(x.size());
}

Matrix k0_matrix(const Matrix& X, const Matrix& Y, Execution exec) {
  if (X.cols() != Y.cols()) throw UsageError("k0_matrix: input dimension mismatch");
  if (X.cols() == 0) throw UsageError("k0_matrix: zero-dimensional inputs");
  // Per-entry dot products over contiguous columns: entry (i, j) does not
  // depend on where the rows sit, unlike a blocked GEMM.
  const Matrix Xt = X.transpose();
  const Matrix Yt = Y.transpose();
  const double d = static_cast<double>(X.cols());
  Matrix out(X.rows(), Y.rows());
  const bool parallel = exec == Execution::parallel;
#pragma omp parallel for schedule(static) if (parallel)
  for (Eigen::Index j = 0; j < Y.rows(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i, j) = Xt.col(i).dot(Yt.col(j)) / d;
  }
  return out;
}

double next_layer(double k_xx, double k_xy, double k_yy, const KernelParams& params,
                  const FqTable& table) {
  check_table(params, table);
  const double a = params.sigma_b2 + params.sigma_w2 * k_xx;
  const double b = params.sigma_b2 + params.sigma_w2 * k_yy;
  const double c = params.sigma_b2 + params.sigma_w2 * k_xy;
  if (!(a > 0.0) || !(b > 0.0)) degenerate(-1);
  return fq_step(a, b, c, params, table, -1, -1, 1);
}

std::vector<double> diagonal_trajectory(double k0_xx, const KernelParams& params,
                                        const FqTable& table) {
  check_table(params, table);
  std::vector<double> out(params.depth + 1);
  out[0] = params.sigma_b2 + params.sigma_w2 * k0_xx;
  if (!(out[0] > 0.0)) degenerate(-1);
  for (int l = 1; l <= params.depth; ++l) {
    out[l] = params.sigma_b2 + params.sigma_w2 * out[l - 1] * table.interpolate(1.0);
  }
  return out;
}

KernelMatrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelParams& params,
                           const FqTable& table, Execution exec) {
  check_table(params, table);
  const bool same = &X == &Y;
  const Matrix base = k0_matrix(X, Y, exec);
  KernelMatrix out;
  out.symmetric = same;
  out.diag_x = trajectories(X, params, table);
  out.diag_y = same ? out.diag_x : trajectories(Y, params, table);

  const Eigen::Index n = X.rows();
  const Eigen::Index m = Y.rows();
  const int depth = params.depth;
  out.values.resize(n, m);
  const auto& dx = out.diag_x;
  const auto& dy = out.diag_y;
  const bool parallel = exec == Execution::parallel;

#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j_end = same ? i + 1 : m;
    for (Eigen::Index j = 0; j < j_end; ++j) {
      double c = params.sigma_b2 + params.sigma_w2 * base(i, j);
      for (int l = 1; l <= depth; ++l) {
        c = fq_step(dx[l - 1](i), dy[l - 1](j), c, params, table, i, j, l);
      }
      out.values(i, j) = c;
    }
  }
  if (same) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) out.values(j, i) = out.values(i, j);
    }
  }
  return out;
}

KernelMatrix kernel_matrix(const Matrix& X, const KernelParams& params, const FqTable& table,
                           Execution exec) {
  return kernel_matrix(X, X, params, table, exec);
}

Matrix relu_nngp_kernel(const Matrix& X, const Matrix& Y, int depth, double sigma_b2_t,
                        double sigma_w2_t) {
  if (depth < 1) throw UsageError("relu_nngp_kernel: depth must be >= 1");
  if (!(sigma_b2_t >= 0.0) || !(sigma_w2_t >= 0.0) || !(sigma_b2_t + sigma_w2_t > 0.0)) {
    throw UsageError("relu_nngp_kernel: variances must be >= 0 with positive sum");
  }
  const Matrix base = k0_matrix(X, Y);
  auto diag_chain = [&](const Matrix& Z) {
    const Vector base_diag = k0_diagonal(Z);
    std::vector<Vector> diag(depth + 1, Vector(Z.rows()));
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      diag[0](i) = sigma_b2_t + sigma_w2_t * base_diag(i);
      if (!(diag[0](i) > 0.0)) degenerate(i);
      // theta = 0: sin 0 + pi cos 0 = pi.
      for (int l = 1; l <= depth; ++l) diag[l](i) = sigma_b2_t + 0.5 * sigma_w2_t * diag[l - 1](i);
    }
    return diag;
  };
  const auto dx = diag_chain(X);
  const auto dy = diag_chain(Y);
  Matrix out(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
      double k = sigma_b2_t + sigma_w2_t * base(i, j);
      for (int l = 1; l <= depth; ++l) {
        const double norm = std::sqrt(dx[l - 1](i) * dy[l - 1](j));
        const double rho = clamped_correlation(k, dx[l - 1](i), dy[l - 1](j), i, j, l);
        const double theta = std::acos(rho);
        k = sigma_b2_t + sigma_w2_t / (2.0 * std::numbers::pi) * norm *
                             (std::sin(theta) + (std::numbers::pi - theta) * rho);
      }
      out(i, j) = k;
    }
  }
  return out;
}

double prop1_residual(const Matrix& X, const KernelParams& params, const FqTable& table) {
  if (params.q != 2) throw UsageError("prop1_residual: requires q = 2");
  const Matrix maxout = kernel_matrix(X, params, table).values;
  const Matrix Xs = X / std::numbers::sqrt2;
  const Matrix relu = relu_nngp_kernel(Xs, Xs, params.depth, params.sigma_b2, 2.0 * params.sigma_w2);
  return (maxout - relu).cwiseAbs().maxCoeff();
}

namespace reference {

Matrix kernel_matrix(const Matrix& X, const Matrix& Y, const KernelParams& params,
                     const FqTable& table) {
  check_table(params, table);
  if (X.cols() != Y.cols()) throw UsageError("kernel_matrix: input dimension mismatch");
  const auto G = [&](double k) { return params.sigma_b2 + params.sigma_w2 * k; };
  const auto H = [&](double a, double b, double c) {
    const double rho = std::clamp(c / std::sqrt(a * b), -1.0, 1.0);
    return std::sqrt(a * b) * table.interpolate(rho);
  };
  Matrix out(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
      double kxx = 0.0, kyy = 0.0, kxy = 0.0;
      for (Eigen::Index t = 0; t < X.cols(); ++t) {
        kxx += X(i, t) * X(i, t);
        kyy += Y(j, t) * Y(j, t);
        kxy += X(i, t) * Y(j, t);
      }
      const double d = static_cast<double>(X.cols());
      kxx /= d;
      kyy /= d;
      kxy /= d;
      if (!(G(kxx) > 0.0)) degenerate(i);
      if (!(G(kyy) > 0.0)) degenerate(j);
      for (int l = 1; l < params.depth; ++l) {
        const double a = G(kxx), b = G(kyy), c = G(kxy);
        kxx = H(a, a, a);
        kyy = H(b, b, b);
        kxy = H(a, b, c);
      }
      out(i, j) = next_layer(kxx, kxy, kyy, params, table);
    }
  }
  return out;
}

}  // namespace reference

}  // namespace mnngp
