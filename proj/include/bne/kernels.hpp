#pragma once

#include <Eigen/Dense>

namespace bne {

enum class KernelFamily { matern32, rbf, periodic };

// Stationary covariance function. k(z, z) = amplitude for every family.
struct KernelSpec {
  KernelFamily family = KernelFamily::matern32;
  double length_scale = 1.0;
  double period = 1.0;     // periodic only
  double amplitude = 1.0;

  void validate() const;
};

// Kernel value at distance d = ||z - z'||_2.
double kernel_eval_dist(const KernelSpec& spec, double d);

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp);

// Gram matrix over the rows of Z (and cross-gram between two point sets).
// Parallelized over rows; entries are independent so the result does not
// depend on the thread count.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& Z);
Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Eigen::MatrixXd& A,
                           const Eigen::MatrixXd& B);

// Joint covariance blocks of a GP and its derivative along one coordinate
// axis: K[i][j] = k(z_i, z_j), K_d[i][j] = d k(z_i, z')/d z'_axis at z_j,
// K_dd[i][j] = d^2 k / d z_axis d z'_axis. The 2N x 2N block matrix
// [[K, K_d], [K_d^T, K_dd]] is positive semidefinite.
struct GramBlocks {
  Eigen::MatrixXd K;
  Eigen::MatrixXd K_d;
  Eigen::MatrixXd K_dd;
  double jitter = 0.0;

  Eigen::MatrixXd joint() const;
};

GramBlocks derivative_kernels(const KernelSpec& spec, const Eigen::MatrixXd& Z,
                              int axis = 0);

// Pointwise derivative covariances between a query point and a reference
// point, along the given axis of the query (d/dt) and/or reference (d/dt').
double kernel_d1(const KernelSpec& spec, const Eigen::VectorXd& z,
                 const Eigen::VectorXd& zp, int axis);   // d/dz_axis
double kernel_d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                 const Eigen::VectorXd& zp, int axis);   // d/dzp_axis
double kernel_d1d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp, int axis); // d^2/dz_axis dzp_axis

// Higher query-side derivatives, needed for gradients of GP-derivative
// fields with respect to the query coordinate. RBF only.
double kernel_d1d1(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp, int axis);    // d^2/dz_axis^2
double kernel_d1d1d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& zp, int axis);  // d^3/dz_axis^2 dzp_axis

}  // namespace bne
