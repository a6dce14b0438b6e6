#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bne/dataset.hpp"
#include "bne/uncertainty.hpp"

namespace bne {

double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

using CdfFn = std::function<double(const Eigen::VectorXd& x, double y)>;
using IntervalFn = std::function<Interval(const Eigen::VectorXd& x, double level)>;

// Sum over locations of the trapezoidal integral of |F - F*| along y_grid.
double l1_cdf_distance(const CdfFn& model_cdf, const CdfFn& truth_cdf,
                       const Eigen::MatrixXd& locations, const Eigen::VectorXd& y_grid);

std::vector<double> default_coverage_levels();

// Sum over nominal levels of |empirical central-interval coverage - level|.
double coverage_index(const IntervalFn& interval_fn, const Dataset& data,
                      const std::vector<double>& levels = default_coverage_levels());

// Same metric with one predictive distribution built per held-out location.
double coverage_index(const Predictor& pred, const Dataset& data,
                      const std::vector<double>& levels = default_coverage_levels(),
                      int grid_points = 501);

struct MetricReport {
  double rmse_empirical = 0.0;
  std::optional<double> rmse_vs_truth;
  std::optional<double> l1_vs_truth;
  double coverage = 0.0;
  double cvm = 0.0;
  Eigen::Index sample_size = 0;
  std::uint64_t seed = 0;
};

}  // namespace bne
