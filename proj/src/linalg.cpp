#include "bne/linalg.hpp"

#include <stdexcept>
#include <string>

namespace bne {

std::pair<Projector, Eigen::MatrixXd> orthogonalize(const Eigen::MatrixXd& K,
                                                    const Eigen::MatrixXd& F) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n) throw std::invalid_argument("orthogonalize: K must be square");
  Projector proj;
  proj.basis = F;
  if (F.cols() == 0) {
    proj.P = Eigen::MatrixXd::Identity(n, n);
    return {proj, K};
  }
  if (F.rows() != n) throw std::invalid_argument("orthogonalize: F row count mismatch");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
  qr.setThreshold(1e-10);
  if (qr.rank() < F.cols()) {
    // The first pivot beyond the numerical rank identifies a dependent column.
    const auto perm = qr.colsPermutation().indices();
    const Eigen::Index dependent = perm[qr.rank()];
    throw std::invalid_argument("orthogonalize: mean-function column " +
                                std::to_string(dependent) + " is linearly dependent");
  }
  const Eigen::MatrixXd FtF = F.transpose() * F;
  proj.P = Eigen::MatrixXd::Identity(n, n) - F * FtF.ldlt().solve(F.transpose());
  Eigen::MatrixXd K_orth = proj.P * K * proj.P.transpose();
  K_orth = 0.5 * (K_orth + K_orth.transpose()).eval();
  return {proj, K_orth};
}

std::pair<Projector, Eigen::MatrixXd> orthogonalize_tolerant(const Eigen::MatrixXd& K,
                                                             const Eigen::MatrixXd& F) {
  const Eigen::Index n = K.rows();
  Projector proj;
  proj.basis = F;
  if (F.cols() == 0) {
    proj.P = Eigen::MatrixXd::Identity(n, n);
    return {proj, K};
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) {
    proj.P = Eigen::MatrixXd::Identity(n, n);
    return {proj, K};
  }
  const Eigen::MatrixXd Q =
      qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);
  proj.P = Eigen::MatrixXd::Identity(n, n) - Q * Q.transpose();
  Eigen::MatrixXd K_orth = proj.P * K * proj.P.transpose();
  K_orth = 0.5 * (K_orth + K_orth.transpose()).eval();
  return {proj, K_orth};
}

CholFactor::CholFactor(const Eigen::MatrixXd& K) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n) throw std::invalid_argument("CholFactor: matrix must be square");
  if (n == 0) return;
  const double trace_scale = K.trace() / static_cast<double>(n);
  const double scale = trace_scale > 1e-100 ? trace_scale : 1.0;
  const double ladder[] = {1e-8, 1e-6, 1e-4};
  for (double step : ladder) {
    const double jitter = step * scale;
    Eigen::MatrixXd A = K;
    A.diagonal().array() += jitter;
    llt_.compute(A);
    if (llt_.info() == Eigen::Success) {
      jitter_ = jitter;
      log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
      return;
    }
  }
  throw std::runtime_error("CholFactor: factorization failed after 3 jitter escalations");
}

SpectralSolve::SpectralSolve(const Eigen::MatrixXd& A, double cutoff_rel) {
  if (A.rows() != A.cols()) throw std::invalid_argument("SpectralSolve: matrix must be square");
  if (A.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("SpectralSolve: eigendecomposition failed");
  }
  const double cutoff = cutoff_rel * std::max(es.eigenvalues().maxCoeff(), 0.0);
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > cutoff) ++kept;
  }
  basis_.resize(A.rows(), kept);
  inv_eig_.resize(kept);
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > cutoff) {
      basis_.col(at) = es.eigenvectors().col(i);
      inv_eig_[at] = 1.0 / es.eigenvalues()[i];
      ++at;
    }
  }
}

Eigen::VectorXd SpectralSolve::solve(const Eigen::VectorXd& b) const {
  if (basis_.cols() == 0) return Eigen::VectorXd::Zero(b.size());
  return basis_ * inv_eig_.cwiseProduct(basis_.transpose() * b).eval();
}

Eigen::VectorXd CholFactor::solve(const Eigen::VectorXd& b) const {
  return llt_.solve(b);
}

Eigen::MatrixXd CholFactor::solve_mat(const Eigen::MatrixXd& B) const {
  return llt_.solve(B);
}

GpConditionResult gp_condition(const Eigen::MatrixXd& K_train,
                               const Eigen::MatrixXd& K_cross,
                               const Eigen::MatrixXd& K_test,
                               const Eigen::VectorXd& observed,
                               const Eigen::VectorXd& prior_mean_train,
                               const Eigen::VectorXd& prior_mean_test) {
  GpConditionResult out;
  const Eigen::Index n_train = K_train.rows();
  if (n_train == 0) {
    out.mean = prior_mean_test;
    out.cov = K_test;
    return out;
  }
  if (K_cross.rows() != n_train || observed.size() != n_train ||
      prior_mean_train.size() != n_train || K_test.rows() != K_cross.cols()) {
    throw std::invalid_argument("gp_condition: inconsistent shapes");
  }
  const CholFactor chol(K_train);
  const Eigen::VectorXd residual = observed - prior_mean_train;
  const Eigen::VectorXd alpha = chol.solve(residual);
  out.mean = prior_mean_test + K_cross.transpose() * alpha;
  Eigen::MatrixXd cov = K_test - K_cross.transpose() * chol.solve_mat(K_cross);
  cov = 0.5 * (cov + cov.transpose()).eval();
  // Floor negative eigenvalues introduced by cancellation.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() < 0.0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  out.cov = cov;
  return out;
}

}  // namespace bne
