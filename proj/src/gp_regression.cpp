#include "mnngp/gp_regression.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mnngp/errors.hpp"

namespace mnngp {

Matrix encode_targets(std::span<const int> labels, int n_classes) {
  if (n_classes < 1) throw UsageError("encode_targets: n_classes must be >= 1");
  Matrix T = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), n_classes, kTargetOff);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw UsageError("encode_targets: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    T(static_cast<Eigen::Index>(i), labels[i]) = kTargetOn;
  }
  return T;
}

Matrix JitteredCholesky::solve(const Matrix& rhs) const {
  if (rhs.rows() != llt_.rows()) throw UsageError("JitteredCholesky::solve: row mismatch");
  return llt_.solve(rhs);
}

JitteredCholesky solve_with_jitter(const Matrix& K_train, double noise0) {
  if (K_train.rows() != K_train.cols() || K_train.rows() == 0) {
    throw UsageError("solve_with_jitter: K_train must be square and nonempty");
  }
  if (!(noise0 >= 0.0) || !std::isfinite(noise0)) {
    throw UsageError("solve_with_jitter: noise0 must be finite and >= 0");
  }
  if (!K_train.allFinite()) throw UsageError("solve_with_jitter: K_train has non-finite entries");
  const int max_k = noise0 > 0.0 ? kMaxEscalations : 0;
  double noise = noise0;
  for (int k = 0; k <= max_k; ++k) {
    noise = noise0 * std::pow(kEscalationFactor, k);
    Matrix A = K_train;
    A.diagonal().array() += noise;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) return JitteredCholesky(std::move(llt), noise, k);
  }
  std::ostringstream msg;
  msg << "Cholesky factorization failed after " << max_k << " escalations (final noise " << noise
      << ")";
  throw ConditioningError(msg.str(), noise);
}

namespace {

void check_shapes(const Matrix& K_train, const Matrix& K_cross) {
  if (K_cross.cols() != K_train.rows()) {
    throw UsageError("posterior: K_cross has " + std::to_string(K_cross.cols()) +
                     " columns, K_train has " + std::to_string(K_train.rows()) + " rows");
  }
}

}  // namespace

PosteriorResult posterior_mean(const Matrix& K_train, const Matrix& K_cross, const Matrix& targets,
                               double noise0) {
  check_shapes(K_train, K_cross);
  if (targets.rows() != K_train.rows()) throw UsageError("posterior_mean: targets row mismatch");
  const JitteredCholesky factor = solve_with_jitter(K_train, noise0);
  PosteriorResult out;
  out.mean = K_cross * factor.solve(targets);
  out.noise_used = factor.noise_used();
  out.escalations = factor.escalations();
  return out;
}

Matrix posterior_cov(const JitteredCholesky& factor, const Matrix& K_cross, const Matrix& K_test) {
  if (K_cross.cols() != factor.size()) throw UsageError("posterior_cov: K_cross column mismatch");
  if (K_test.rows() != K_cross.rows() || K_test.cols() != K_cross.rows()) {
    throw UsageError("posterior_cov: K_test must be m x m");
  }
  // K_cross A^-1 K_cross^T = V^T V with V = L^-1 K_cross^T.
  const Matrix V = factor.llt().matrixL().solve(K_cross.transpose());
  Matrix cov = K_test - V.transpose() * V;
  return 0.5 * (cov + cov.transpose());
}

Matrix posterior_cov(const Matrix& K_train, const Matrix& K_cross, const Matrix& K_test,
                     double noise0) {
  check_shapes(K_train, K_cross);
  return posterior_cov(solve_with_jitter(K_train, noise0), K_cross, K_test);
}

PosteriorResult posterior(const Matrix& K_train, const Matrix& K_cross, const Matrix& K_test,
                          const Matrix& targets, double noise0) {
  check_shapes(K_train, K_cross);
  if (targets.rows() != K_train.rows()) throw UsageError("posterior: targets row mismatch");
  const JitteredCholesky factor = solve_with_jitter(K_train, noise0);
  PosteriorResult out;
  out.mean = K_cross * factor.solve(targets);
  out.cov = posterior_cov(factor, K_cross, K_test);
  out.noise_used = factor.noise_used();
  out.escalations = factor.escalations();
  return out;
}

std::vector<int> predict_classes(const Matrix& mean) {
  if (mean.cols() < 1) throw UsageError("predict_classes: need at least one class column");
  std::vector<int> out(mean.rows());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < mean.cols(); ++c) {
      if (mean(i, c) > mean(i, best)) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw UsageError("accuracy: length mismatch");
  if (pred.empty()) throw UsageError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> per_class_accuracy(std::span<const int> pred, std::span<const int> truth,
                                       int n_classes) {
  if (pred.size() != truth.size()) throw UsageError("per_class_accuracy: length mismatch");
  std::vector<double> hits(n_classes, 0.0), count(n_classes, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes) throw UsageError("per_class_accuracy: bad label");
    count[truth[i]] += 1.0;
    hits[truth[i]] += pred[i] == truth[i];
  }
  std::vector<double> out(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    out[c] = count[c] > 0 ? hits[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace mnngp
