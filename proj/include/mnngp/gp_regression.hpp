#pragma once

// Exact GP posterior for classification-as-regression.
//
//   mu    = K_cross (K_train + s I)^-1 T
//   Sigma = K_test - K_cross (K_train + s I)^-1 K_cross^T
//
// s starts at noise0 and is multiplied by 10 whenever the Cholesky
// factorization fails, at most kMaxEscalations times.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "mnngp/kernel.hpp"

namespace mnngp {

inline constexpr double kTargetOn = 0.9;
inline constexpr double kTargetOff = -0.1;
inline constexpr int kMaxEscalations = 10;
inline constexpr double kEscalationFactor = 10.0;

/// n x C matrix with 0.9 at (i, labels[i]) and -0.1 elsewhere.
Matrix encode_targets(std::span<const int> labels, int n_classes);

/// Immutable Cholesky factor of K + noise_used * I. solve() is const and may be
/// called concurrently.
class JitteredCholesky {
public:
  JitteredCholesky(Eigen::LLT<Matrix> llt, double noise_used, int escalations)
      : llt_(std::move(llt)), noise_used_(noise_used), escalations_(escalations) {}

  double noise_used() const noexcept { return noise_used_; }
  int escalations() const noexcept { return escalations_; }
  Eigen::Index size() const noexcept { return llt_.rows(); }
  Matrix solve(const Matrix& rhs) const;
  const Eigen::LLT<Matrix>& llt() const noexcept { return llt_; }

private:
  Eigen::LLT<Matrix> llt_;
  double noise_used_;
  int escalations_;
};

/// Attempt k uses noise0 * 10^k for k = 0..kMaxEscalations; a failure at the
/// cap throws ConditioningError carrying the last noise tried. A factorization
/// fails when Eigen's LLT meets a pivot <= 0. noise0 = 0 disables escalation.
JitteredCholesky solve_with_jitter(const Matrix& K_train, double noise0);

struct PosteriorResult {
  Matrix mean;
  std::optional<Matrix> cov;
  double noise_used = 0.0;
  int escalations = 0;
};

PosteriorResult posterior_mean(const Matrix& K_train, const Matrix& K_cross, const Matrix& targets,
                               double noise0);

/// Mean and covariance from one factorization.
PosteriorResult posterior(const Matrix& K_train, const Matrix& K_cross, const Matrix& K_test,
                          const Matrix& targets, double noise0);

Matrix posterior_cov(const Matrix& K_train, const Matrix& K_cross, const Matrix& K_test,
                     double noise0);
Matrix posterior_cov(const JitteredCholesky& factor, const Matrix& K_cross, const Matrix& K_test);

/// Row-wise argmax, ties to the lowest index.
std::vector<int> predict_classes(const Matrix& mean);

double accuracy(std::span<const int> pred, std::span<const int> truth);

/// Accuracy restricted to each true class; NaN for classes absent from truth.
std::vector<double> per_class_accuracy(std::span<const int> pred, std::span<const int> truth,
                                       int n_classes);

}  // namespace mnngp
