#include "bne/reference.hpp"

#include <cmath>

#include "bne/math_special.hpp"

namespace bne::serial {

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& Z) {
  spec.validate();
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K(i, j) = kernel_eval_dist(spec, (Z.row(i) - Z.row(j)).norm());
    }
  }
  return K;
}

GramBlocks derivative_kernels(const KernelSpec& spec, const Eigen::MatrixXd& Z, int axis) {
  GramBlocks blocks;
  const Eigen::Index n = Z.rows();
  blocks.K.resize(n, n);
  blocks.K_d.resize(n, n);
  blocks.K_dd.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd zi = Z.row(i).transpose();
      const Eigen::VectorXd zj = Z.row(j).transpose();
      blocks.K(i, j) = kernel_eval(spec, zi, zj);
      blocks.K_d(i, j) = kernel_d2(spec, zi, zj, axis);
      blocks.K_dd(i, j) = kernel_d1d2(spec, zi, zj, axis);
    }
  }
  return blocks;
}

double data_loglik(const ModelState& state, const ParamDraw& draw) {
  const ModelState::DrawCache cache = state.make_cache(draw);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < state.n(); ++i) {
    acc += std::log(
        state.model_pdf(cache, state.data().x.row(i).transpose(), state.data().y[i]));
  }
  if (state.has_calibration()) acc += constraint_loglik(draw, state.hyper().sigma_c);
  return acc;
}

double cvm_empirical(const ModelState& state, const ParamDraw& draw, const CvmGrid& grid,
                     const Dataset& data) {
  const ModelState::DrawCache cache = state.make_cache(draw);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.x.row(i).transpose();
    double running = 0.0;
    for (Eigen::Index j = 0; j < grid.y_points.size(); ++j) {
      running = std::max(running, state.calibrated_cdf(cache, x, grid.y_points[j]));
      const double ind = data.y[i] < grid.y_points[j] ? 1.0 : 0.0;
      acc += (running - ind) * (running - ind);
    }
  }
  return acc / static_cast<double>(data.size() * grid.y_points.size());
}

MiEstimate mixture_mutual_information(const Eigen::MatrixXd& densities,
                                      const Eigen::VectorXd& weights) {
  const Eigen::Index nd = densities.rows();
  auto entropy = [&](const Eigen::VectorXd& f) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      if (f[j] > 1e-300) acc -= weights[j] * f[j] * std::log(f[j]);
    }
    return acc;
  };
  MiEstimate est;
  double mean_h = 0.0;
  for (Eigen::Index d = 0; d < nd; ++d) mean_h += entropy(densities.row(d).transpose());
  est.mean_entropy = mean_h / nd;
  est.total_entropy = entropy(densities.colwise().mean().transpose());
  est.mi = est.total_entropy - est.mean_entropy;
  return est;
}

PredictiveDistribution predict(const ModelState& state, const PosteriorDraws& draws,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& y_grid) {
  PredictiveDistribution dist;
  dist.y_grid = y_grid;
  const Eigen::Index nd = static_cast<Eigen::Index>(draws.draws.size());
  dist.cdf.resize(nd, y_grid.size());
  dist.sys_cdf.resize(nd, y_grid.size());
  dist.pdf.resize(nd, y_grid.size());
  for (Eigen::Index d = 0; d < nd; ++d) {
    const ModelState::DrawCache cache = state.make_cache(draws.draws[d]);
    // slope-mass normalizer matching the predictive construction
    double total = 1.0;
    if (state.has_calibration()) {
      const int nodes = 257;
      total = 0.0;
      double prev = std::max(
          1.0 + kSqrt2Pi * state.der_cross_row(x, 0.0).dot(cache.w), 0.0);
      for (int k = 1; k < nodes; ++k) {
        const double cur = std::max(
            1.0 + kSqrt2Pi * state.der_cross_row(x, double(k) / (nodes - 1)).dot(cache.w),
            0.0);
        total += 0.5 * (prev + cur) / (nodes - 1);
        prev = cur;
      }
      if (total <= 0.0) total = 1.0;
    }
    double running = 0.0;
    for (Eigen::Index j = 0; j < y_grid.size(); ++j) {
      dist.sys_cdf(d, j) = state.systematic_cdf(cache, x, y_grid[j]);
      running = std::max(running, state.calibrated_cdf(cache, x, y_grid[j]));
      dist.cdf(d, j) = running;
      dist.pdf(d, j) = state.model_pdf(cache, x, y_grid[j]) / total;
    }
  }
  return dist;
}

}  // namespace bne::serial
