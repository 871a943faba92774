#include "mnngp/mc_validation.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "mnngp/errors.hpp"

namespace mnngp {

void NetworkArch::validate() const {
  if (d_in < 1 || d_out < 1 || q < 1) throw UsageError("NetworkArch: d_in, d_out, q must be >= 1");
  if (widths.empty()) throw UsageError("NetworkArch: need at least one hidden layer");
  for (int w : widths) {
    if (w < 1) throw UsageError("NetworkArch: widths must be >= 1");
  }
  if (!(sigma_b2 >= 0.0) || !(sigma_w2 >= 0.0)) throw UsageError("NetworkArch: negative variance");
}

KernelParams NetworkArch::kernel_params() const { return {q, depth(), sigma_b2, sigma_w2}; }

NetworkArch NetworkArch::uniform(int d_in, int width, int depth, int q, double sigma_b2,
                                 double sigma_w2, int d_out) {
  return {d_in, std::vector<int>(std::max(depth, 0), width), q, d_out, sigma_b2, sigma_w2};
}

namespace {

using Rng = std::mt19937_64;

void fill_normal(Matrix& M, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = scale * normal(rng);
  }
}

// Columns are grouped by unit: pre-activation (k, m) sits in column k * q + m.
Matrix maxout(const Matrix& Z, int q) {
  const Eigen::Index units = Z.cols() / q;
  Matrix A(Z.rows(), units);
  for (Eigen::Index k = 0; k < units; ++k) {
    A.col(k) = Z.col(k * q);
    for (int m = 1; m < q; ++m) A.col(k) = A.col(k).cwiseMax(Z.col(k * q + m));
  }
  return A;
}

// Symmetric PSD square root; tiny negative eigenvalues from rounding are zeroed.
Matrix psd_sqrt(const Matrix& C) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(C);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// One network's contribution to the second-moment estimate: z z^T for the
// sampled output, or its conditional mean sigma_w2 / N_L * A A^T + sigma_b2.
Matrix gram_contribution(const NetworkArch& arch, const Matrix& first_root, Eigen::Index n,
                         OutputEstimator estimator, Rng& rng) {
  Matrix G(n, static_cast<Eigen::Index>(arch.widths[0]) * arch.q);
  fill_normal(G, 1.0, rng);
  Matrix A = maxout(first_root * G, arch.q);
  for (int l = 1; l <= arch.depth(); ++l) {
    const double fan_in = static_cast<double>(A.cols());
    Matrix C = (arch.sigma_w2 / fan_in) * (A * A.transpose());
    C.array() += arch.sigma_b2;
    if (l == arch.depth() && estimator == OutputEstimator::conditional) return C;
    const Matrix root = psd_sqrt(C);
    if (l == arch.depth()) {
      Matrix g(n, 1);
      fill_normal(g, 1.0, rng);
      const Vector z = root * g;
      return z * z.transpose();
    }
    Matrix H(n, static_cast<Eigen::Index>(arch.widths[l]) * arch.q);
    fill_normal(H, 1.0, rng);
    A = maxout(root * H, arch.q);
  }
  return {};
}

// Explicit-weight forward pass; activations stored as (features x n) so each
// layer is W * A + b. With last_hidden set, stops before the output layer.
Matrix explicit_forward(const NetworkArch& arch, const Matrix& X, std::uint64_t seed,
                        bool last_hidden) {
  Rng rng(seed);
  const double sb = std::sqrt(arch.sigma_b2);
  Matrix A = X.transpose();
  for (int l = 0; l <= arch.depth(); ++l) {
    const Eigen::Index fan_in = A.rows();
    const bool output = l == arch.depth();
    if (output && last_hidden) return A.transpose();
    const Eigen::Index rows = output ? arch.d_out : static_cast<Eigen::Index>(arch.widths[l]) * arch.q;
    Matrix W(rows, fan_in);
    fill_normal(W, std::sqrt(arch.sigma_w2 / static_cast<double>(fan_in)), rng);
    Matrix b(rows, 1);
    fill_normal(b, sb, rng);
    Matrix Z = W * A;
    Z.colwise() += b.col(0);
    if (output) return Z.transpose();
    A = maxout(Z.transpose(), arch.q).transpose();
  }
  return {};
}

}  // namespace

Matrix sample_and_forward(const NetworkArch& arch, const Matrix& X, std::uint64_t seed) {
  arch.validate();
  if (X.cols() != arch.d_in) throw UsageError("sample_and_forward: X has wrong input dimension");
  return explicit_forward(arch, X, seed, false);
}

EmpiricalKernel empirical_kernel(const NetworkArch& arch, const Matrix& X, long n_networks,
                                 std::uint64_t seed, SamplerMethod method,
                                 OutputEstimator estimator, Execution exec) {
  arch.validate();
  if (arch.d_out != 1) throw UsageError("empirical_kernel: requires d_out = 1");
  if (n_networks < 100) throw UsageError("empirical_kernel: n_networks must be >= 100");
  if (X.cols() != arch.d_in) throw UsageError("empirical_kernel: X has wrong input dimension");

  const Eigen::Index n = X.rows();
  Matrix C0 = (arch.sigma_w2 / static_cast<double>(arch.d_in)) * (X * X.transpose());
  C0.array() += arch.sigma_b2;
  const Matrix first_root = psd_sqrt(C0);

  const bool parallel = exec == Execution::parallel;
  auto contribution = [&](long s) -> Matrix {
    const std::uint64_t net_seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    if (method == SamplerMethod::gram) {
      Rng rng(net_seed);
      return gram_contribution(arch, first_root, n, estimator, rng);
    }
    if (estimator == OutputEstimator::conditional) {
      const Matrix A = explicit_forward(arch, X, net_seed, true);
      Matrix C = (arch.sigma_w2 / static_cast<double>(A.cols())) * (A * A.transpose());
      C.array() += arch.sigma_b2;
      return C;
    }
    const Vector z = explicit_forward(arch, X, net_seed, false).col(0);
    return z * z.transpose();
  };

  // Blocks are filled in parallel and reduced in network order.
  constexpr long kBlock = 256;
  std::vector<Matrix> block(kBlock);
  Matrix sum = Matrix::Zero(n, n);
  Matrix sq = Matrix::Zero(n, n);
  for (long start = 0; start < n_networks; start += kBlock) {
    const long count = std::min(kBlock, n_networks - start);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
    for (long k = 0; k < count; ++k) block[k] = contribution(start + k);
    for (long k = 0; k < count; ++k) {
      sum += block[k];
      sq += block[k].cwiseProduct(block[k]);
    }
  }
  const double S = static_cast<double>(n_networks);
  EmpiricalKernel out;
  out.n_networks = n_networks;
  out.second_moment = sum / S;
  const Matrix var = ((sq - S * out.second_moment.cwiseProduct(out.second_moment)) / (S - 1.0))
                         .cwiseMax(0.0);
  out.std_error = (var / S).cwiseSqrt();
  return out;
}

double relative_frobenius_gap(const Matrix& empirical, const Matrix& theory) {
  if (empirical.rows() != theory.rows() || empirical.cols() != theory.cols()) {
    throw UsageError("relative_frobenius_gap: shape mismatch");
  }
  const double denom = theory.norm();
  if (!(denom > 0.0)) throw DomainError("relative_frobenius_gap: zero theory kernel");
  return (empirical - theory).norm() / denom;
}

double theorem1_gap(const NetworkArch& arch, const KernelParams& params, const FqTable& table,
                    const Matrix& X, long n_networks, std::uint64_t seed, SamplerMethod method,
                    OutputEstimator estimator, Execution exec) {
  const KernelParams a = arch.kernel_params();
  if (a.q != params.q || a.depth != params.depth || a.sigma_b2 != params.sigma_b2 ||
      a.sigma_w2 != params.sigma_w2) {
    throw UsageError("theorem1_gap: architecture and kernel parameters disagree");
  }
  const Matrix theory = kernel_matrix(X, params, table, exec).values;
  const EmpiricalKernel emp = empirical_kernel(arch, X, n_networks, seed, method, estimator, exec);
  return relative_frobenius_gap(emp.second_moment, theory);
}

}  // namespace mnngp
