#pragma once

#include <Eigen/Dense>

namespace bne {

// Orthogonal projector onto the residual space of the mean-function basis F:
// P = I - F (F^T F)^{-1} F^T. P is symmetric and idempotent, and P F = 0.
struct Projector {
  Eigen::MatrixXd P;
  Eigen::MatrixXd basis;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return P * v; }
};

// Builds the projector for F (N x m, full column rank) and returns it with
// the orthogonalized kernel matrix P K P^T. m = 0 yields P = I, K unchanged.
// Throws if F is rank deficient, naming the dependent column.
std::pair<Projector, Eigen::MatrixXd> orthogonalize(const Eigen::MatrixXd& K,
                                                    const Eigen::MatrixXd& F);

// Rank-tolerant variant: projects onto the orthogonal complement of the
// numerical column space of F (rank-revealing QR), accepting rank-deficient
// bases instead of throwing.
std::pair<Projector, Eigen::MatrixXd> orthogonalize_tolerant(const Eigen::MatrixXd& K,
                                                             const Eigen::MatrixXd& F);

// Cholesky factor of K + jitter*I obtained by escalating the jitter over the
// ladder {1e-8, 1e-6, 1e-4} scaled by trace(K)/N. Throws after the ladder is
// exhausted.
class CholFactor {
 public:
  CholFactor() = default;
  explicit CholFactor(const Eigen::MatrixXd& K);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve_mat(const Eigen::MatrixXd& B) const;
  double log_det() const { return log_det_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.matrixL().rows(); }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

// Spectrally filtered pseudo-inverse of a symmetric PSD matrix: eigenpairs
// below cutoff_rel * lambda_max are dropped. Conditioning near-singular
// smooth-kernel covariances through a jittered Cholesky amplifies the
// numerical null space (prior-free directions for a whitened sampler) into
// wild swings between anchor points; the filtered operator makes those
// directions inert instead.
class SpectralSolve {
 public:
  SpectralSolve() = default;
  SpectralSolve(const Eigen::MatrixXd& A, double cutoff_rel = 1e-7);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::Index rank() const { return inv_eig_.size(); }

 private:
  Eigen::MatrixXd basis_;
  Eigen::VectorXd inv_eig_;
};

// Standard GP conditioning. Given the training covariance K_train (PD after
// jitter), cross covariance K_cross (train x test), test covariance K_test,
// observed training values and prior means, returns the posterior mean and
// covariance of the test values. An empty training set returns the prior.
// The returned covariance is symmetrized and clipped to PSD by flooring
// negative eigenvalues at zero.
struct GpConditionResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GpConditionResult gp_condition(const Eigen::MatrixXd& K_train,
                               const Eigen::MatrixXd& K_cross,
                               const Eigen::MatrixXd& K_test,
                               const Eigen::VectorXd& observed,
                               const Eigen::VectorXd& prior_mean_train,
                               const Eigen::VectorXd& prior_mean_test);

}  // namespace bne
