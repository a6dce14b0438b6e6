#pragma once

#include <vector>

#include "bne/predictive.hpp"

namespace bne {

// E[y] from a CDF row via E(y) = integral of [I(y > 0) - F(y)] dy.
double predictive_mean_from_cdf(const Eigen::VectorXd& cdf, const Eigen::VectorXd& y_grid);

// Per-draw predictive mean for one row of a PredictiveDistribution. A
// tail_warning on the distribution signals incomplete grid coverage.
double predictive_mean(const PredictiveDistribution& dist, Eigen::Index draw);

// Three-part split of the predictive mean: the weighted ensemble prediction,
// the residual-process correction, and the distribution-calibration
// correction (quadrature of systematic minus calibrated CDF).
struct MeanParts {
  double ensemble_term = 0.0;
  double d_delta = 0.0;
  double d_g = 0.0;
};

std::vector<MeanParts> mean_decomposition(const Predictor& pred, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y_grid);
std::vector<MeanParts> mean_decomposition(const Predictor& pred, const Eigen::VectorXd& x);

// Fraction of draws with D > 0; exact zeros count one half.
double bias_exceedance(const Eigen::VectorXd& d_draws);

enum class Statistic { variance, skewness, kurtosis };

// Per-draw impact of the calibration map on a summary statistic:
// integral of s'(y) [Phi - G(Phi)] dy with E, SD taken from the calibrated
// CDF (two-pass). Throws when SD < 1e-8 for a standardized statistic.
Eigen::VectorXd statistic_bias(const PredictiveDistribution& dist, Statistic stat);

// Mixture-based mutual information estimate: entropy of the draw-averaged
// density minus the mean per-draw entropy, with jackknife standard errors.
// `weights` are quadrature weights (trapezoid for a grid, ones for discrete
// supports).
struct MiEstimate {
  double total_entropy = 0.0;
  double mean_entropy = 0.0;
  double mi = 0.0;
  double se_total = 0.0;
  double se_mean = 0.0;
  double se_mi = 0.0;
};

MiEstimate mixture_mutual_information(const Eigen::MatrixXd& densities,
                                      const Eigen::VectorXd& weights);

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);

struct EntropyRow {
  double total_entropy = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
  double se_total = 0.0;
  double se_aleatoric = 0.0;
  double se_epistemic = 0.0;
  bool density_warning = false;
};

EntropyRow entropy_decompose(const PredictiveDistribution& dist);

// Epistemic split from three fits on the same data: the full model, the
// model with the calibration map pinned to the identity, and the weights-only
// model. Each term is a difference of mutual-information estimates.
struct EpistemicSplit {
  double structural_g = 0.0;
  double structural_delta = 0.0;
  double parametric = 0.0;
  double se_structural_g = 0.0;
  double se_structural_delta = 0.0;
  double se_parametric = 0.0;
};

EpistemicSplit epistemic_split(const PredictiveDistribution& full,
                               const PredictiveDistribution& no_calibration,
                               const PredictiveDistribution& weights_only);

// Law-of-total-variance split using per-draw predictive means/variances.
struct VarianceSplit {
  double structural_g = 0.0;
  double structural_delta = 0.0;
  double parametric = 0.0;
  double aleatoric = 0.0;
  double total = 0.0;
  double se_structural_g = 0.0;
  double se_structural_delta = 0.0;
  double se_parametric = 0.0;
  double se_aleatoric = 0.0;
};

VarianceSplit variance_decompose(const PredictiveDistribution& full,
                                 const PredictiveDistribution& no_calibration,
                                 const PredictiveDistribution& weights_only);

// Central interval from the draw-averaged calibrated CDF inverted by
// monotone linear interpolation. Levels outside the achieved CDF range clamp
// to the grid ends and set `clamped`.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool clamped = false;
};

Interval predictive_interval(const PredictiveDistribution& dist, double q);

}  // namespace bne
