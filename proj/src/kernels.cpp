#include "bne/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace bne {

void KernelSpec::validate() const {
  if (!(length_scale > 0.0)) throw std::invalid_argument("KernelSpec: length_scale must be > 0");
  if (!(amplitude > 0.0)) throw std::invalid_argument("KernelSpec: amplitude must be > 0");
  if (family == KernelFamily::periodic && !(period > 0.0)) {
    throw std::invalid_argument("KernelSpec: period must be > 0");
  }
}

double kernel_eval_dist(const KernelSpec& spec, double d) {
  const double l = spec.length_scale;
  switch (spec.family) {
    case KernelFamily::matern32: {
      const double a = std::sqrt(3.0) * d / l;
      return spec.amplitude * (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::rbf:
      return spec.amplitude * std::exp(-0.5 * d * d / (l * l));
    case KernelFamily::periodic: {
      const double s = std::sin(M_PI * std::fabs(d) / spec.period);
      return spec.amplitude * std::exp(-2.0 * s * s / (l * l));
    }
  }
  throw std::logic_error("kernel_eval_dist: unknown family");
}

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp) {
  if (z.size() != zp.size()) {
    throw std::invalid_argument("kernel_eval: dimension mismatch between z and z'");
  }
  spec.validate();
  return kernel_eval_dist(spec, (z - zp).norm());
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& Z) {
  spec.validate();
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd K(n, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = spec.amplitude;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_eval_dist(spec, (Z.row(i) - Z.row(j)).norm());
      K(i, j) = v;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i);
  }
  return K;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec, const Eigen::MatrixXd& A,
                           const Eigen::MatrixXd& B) {
  spec.validate();
  if (A.cols() != B.cols()) {
    throw std::invalid_argument("cross_gram: dimension mismatch");
  }
  Eigen::MatrixXd K(A.rows(), B.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      K(i, j) = kernel_eval_dist(spec, (A.row(i) - B.row(j)).norm());
    }
  }
  return K;
}

namespace {

// Derivative building blocks. With u = z_axis - zp_axis and d = ||z - zp||:
//   d2 := dk/d zp_axis = k'(d) * (-u/d)
//   d1d2 := d^2 k / dz_axis dzp_axis = -k''(d) u^2/d^2 - k'(d)(d^2-u^2)/d^3
// evaluated with care at d = 0. Matern-3/2: k'(d) = -3 d/l^2 exp(-sqrt3 d/l),
// so k'/d extends continuously; RBF is analytic.

struct DerivVals {
  double d2;    // dk/dzp_axis
  double d1d2;  // d^2 k/dz_axis dzp_axis
};

DerivVals deriv_vals(const KernelSpec& spec, double u, double d) {
  const double l = spec.length_scale;
  DerivVals out{};
  switch (spec.family) {
    case KernelFamily::matern32: {
      const double a = std::sqrt(3.0) / l;
      const double e = std::exp(-a * d);
      // k(d) = amp (1 + a d) e^{-a d}; k'(d)/d = -amp a^2 e^{-a d}
      out.d2 = spec.amplitude * a * a * u * e;
      out.d1d2 = spec.amplitude * a * a * e - spec.amplitude * a * a * a * u * u *
                                                  (d > 0.0 ? e / d : 0.0);
      return out;
    }
    case KernelFamily::rbf: {
      const double l2 = l * l;
      const double k = spec.amplitude * std::exp(-0.5 * d * d / l2);
      out.d2 = k * u / l2;
      out.d1d2 = k * (1.0 / l2 - u * u / (l2 * l2));
      return out;
    }
    case KernelFamily::periodic:
      throw std::invalid_argument("derivative kernels unsupported for the periodic family");
  }
  throw std::logic_error("deriv_vals: unknown family");
}

}  // namespace

Eigen::MatrixXd GramBlocks::joint() const {
  const Eigen::Index n = K.rows();
  Eigen::MatrixXd J(2 * n, 2 * n);
  J.topLeftCorner(n, n) = K;
  J.topRightCorner(n, n) = K_d;
  J.bottomLeftCorner(n, n) = K_d.transpose();
  J.bottomRightCorner(n, n) = K_dd;
  return J;
}

GramBlocks derivative_kernels(const KernelSpec& spec, const Eigen::MatrixXd& Z,
                              int axis) {
  spec.validate();
  if (spec.family == KernelFamily::periodic) {
    throw std::invalid_argument("derivative kernels unsupported for the periodic family");
  }
  if (axis < 0 || axis >= Z.cols()) {
    throw std::invalid_argument("derivative_kernels: axis out of range");
  }
  const Eigen::Index n = Z.rows();
  GramBlocks blocks;
  blocks.K.resize(n, n);
  blocks.K_d.resize(n, n);
  blocks.K_dd.resize(n, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (Z.row(i) - Z.row(j)).norm();
      const double u = Z(i, axis) - Z(j, axis);
      blocks.K(i, j) = kernel_eval_dist(spec, d);
      const DerivVals dv = deriv_vals(spec, u, d);
      blocks.K_d(i, j) = dv.d2;
      blocks.K_dd(i, j) = dv.d1d2;
    }
  }
  return blocks;
}

double kernel_d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                 const Eigen::VectorXd& zp, int axis) {
  const double d = (z - zp).norm();
  return deriv_vals(spec, z[axis] - zp[axis], d).d2;
}

double kernel_d1(const KernelSpec& spec, const Eigen::VectorXd& z,
                 const Eigen::VectorXd& zp, int axis) {
  // Stationarity: d/dz_axis = -d/dzp_axis.
  return -kernel_d2(spec, z, zp, axis);
}

double kernel_d1d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp, int axis) {
  const double d = (z - zp).norm();
  return deriv_vals(spec, z[axis] - zp[axis], d).d1d2;
}

double kernel_d1d1(const KernelSpec& spec, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& zp, int axis) {
  if (spec.family != KernelFamily::rbf) {
    throw std::invalid_argument("kernel_d1d1: only the rbf family is twice differentiable");
  }
  // stationarity: d^2/dq^2 = -d^2/dq da
  return -kernel_d1d2(spec, z, zp, axis);
}

double kernel_d1d1d2(const KernelSpec& spec, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& zp, int axis) {
  if (spec.family != KernelFamily::rbf) {
    throw std::invalid_argument("kernel_d1d1d2: only the rbf family is smooth enough");
  }
  const double l2 = spec.length_scale * spec.length_scale;
  const double d = (z - zp).norm();
  const double u = z[axis] - zp[axis];
  const double k = spec.amplitude * std::exp(-0.5 * d * d / l2);
  // d^3 k / dq^2 da = -k u (3/l^4 - u^2/l^6)
  return -k * u * (3.0 / (l2 * l2) - u * u / (l2 * l2 * l2));
}

}  // namespace bne
