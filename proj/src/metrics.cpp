#include "bne/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "bne/math_special.hpp"

namespace bne {

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("rmse: length mismatch");
  }
  if (predictions.size() == 0) throw std::invalid_argument("rmse: empty inputs");
  return std::sqrt((predictions - targets).squaredNorm() / predictions.size());
}

double l1_cdf_distance(const CdfFn& model_cdf, const CdfFn& truth_cdf,
                       const Eigen::MatrixXd& locations, const Eigen::VectorXd& y_grid) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < locations.rows(); ++i) {
    const Eigen::VectorXd x = locations.row(i).transpose();
    Eigen::VectorXd gap(y_grid.size());
    for (Eigen::Index j = 0; j < y_grid.size(); ++j) {
      gap[j] = std::fabs(model_cdf(x, y_grid[j]) - truth_cdf(x, y_grid[j]));
    }
    total += trapezoid(gap, y_grid);
  }
  return total;
}

std::vector<double> default_coverage_levels() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

double coverage_index(const IntervalFn& interval_fn, const Dataset& data,
                      const std::vector<double>& levels) {
  if (data.size() == 0) throw std::invalid_argument("coverage_index: empty dataset");
  for (double p : levels) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("coverage_index: level outside (0,1)");
  }
  double ci = 0.0;
  for (double p : levels) {
    Eigen::Index inside = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const Interval iv = interval_fn(data.x.row(i).transpose(), p);
      if (data.y[i] >= iv.lo && data.y[i] <= iv.hi) ++inside;
    }
    const double phat = static_cast<double>(inside) / data.size();
    ci += std::fabs(phat - p);
  }
  return ci;
}

double coverage_index(const Predictor& pred, const Dataset& data,
                      const std::vector<double>& levels, int grid_points) {
  if (data.size() == 0) throw std::invalid_argument("coverage_index: empty dataset");
  std::vector<Eigen::Index> inside(levels.size(), 0);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.x.row(i).transpose();
    const PredictiveDistribution dist = pred.predict(x, pred.default_y_grid(x, grid_points));
    for (size_t l = 0; l < levels.size(); ++l) {
      const Interval iv = predictive_interval(dist, levels[l]);
      if (data.y[i] >= iv.lo && data.y[i] <= iv.hi) ++inside[l];
    }
  }
  double ci = 0.0;
  for (size_t l = 0; l < levels.size(); ++l) {
    ci += std::fabs(static_cast<double>(inside[l]) / data.size() - levels[l]);
  }
  return ci;
}

}  // namespace bne
