#pragma once

#include <vector>

#include "bne/draw.hpp"
#include "bne/model.hpp"

namespace bne {

// Per-location predictive distribution: per-draw CDF/PDF values over a y
// grid. CDF rows are clipped to [0, 1] and monotonized by a running max.
struct PredictiveDistribution {
  Eigen::VectorXd y_grid;
  Eigen::MatrixXd cdf;      // draws x grid (calibrated)
  Eigen::MatrixXd sys_cdf;  // draws x grid (systematic component only)
  Eigen::MatrixXd pdf;      // draws x grid
  bool tail_warning = false;
  bool density_warning = false;

  Eigen::Index n_draws() const { return cdf.rows(); }
  Eigen::VectorXd mean_cdf() const;
};

// Bundles a fitted model with its draws and per-draw solve caches so that
// per-location evaluations stay cheap. Draws can be thinned at construction.
class Predictor {
 public:
  Predictor(const ModelState& state, const PosteriorDraws& draws, int thin = 1);

  const ModelState& state() const { return state_; }
  Eigen::Index n_draws() const { return static_cast<Eigen::Index>(caches_.size()); }
  const ParamDraw& draw(Eigen::Index d) const { return *draw_ptrs_[d]; }

  // Default quadrature grid: 801 points spanning the per-draw systematic
  // means at x plus/minus 8 sigma_eps.
  Eigen::VectorXd default_y_grid(const Eigen::VectorXd& x, int points = 801) const;

  PredictiveDistribution predict(const Eigen::VectorXd& x, const Eigen::VectorXd& y_grid) const;
  PredictiveDistribution predict(const Eigen::VectorXd& x) const;

  Eigen::VectorXd mu_draws(const Eigen::VectorXd& x) const;
  Eigen::VectorXd delta_draws(const Eigen::VectorXd& x) const;
  Eigen::VectorXd ensemble_term_draws(const Eigen::VectorXd& x) const;

 private:
  const ModelState& state_;
  std::vector<const ParamDraw*> draw_ptrs_;
  std::vector<ModelState::DrawCache> caches_;
};

}  // namespace bne
