#include "bne/predictive.hpp"

#include <cmath>
#include <stdexcept>

#include "bne/math_special.hpp"
#include "bne/kernels.hpp"

namespace bne {

Eigen::VectorXd PredictiveDistribution::mean_cdf() const {
  return cdf.colwise().mean();
}

Predictor::Predictor(const ModelState& state, const PosteriorDraws& draws, int thin)
    : state_(state) {
  if (thin < 1) throw std::invalid_argument("Predictor: thin must be >= 1");
  if (draws.draws.empty()) throw std::invalid_argument("Predictor: no draws");
  for (size_t d = 0; d < draws.draws.size(); d += thin) {
    draw_ptrs_.push_back(&draws.draws[d]);
  }
  caches_.reserve(draw_ptrs_.size());
  for (const ParamDraw* d : draw_ptrs_) caches_.push_back(state_.make_cache(*d));
}

Eigen::VectorXd Predictor::mu_draws(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd base = state_.base_at(x);
  Eigen::VectorXd out(n_draws());
#pragma omp parallel for schedule(static)
  for (Eigen::Index d = 0; d < n_draws(); ++d) {
    out[d] = base.dot(caches_[d].omega) + state_.delta_at(caches_[d], x);
  }
  return out;
}

Eigen::VectorXd Predictor::delta_draws(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(n_draws());
#pragma omp parallel for schedule(static)
  for (Eigen::Index d = 0; d < n_draws(); ++d) {
    out[d] = state_.delta_at(caches_[d], x);
  }
  return out;
}

Eigen::VectorXd Predictor::ensemble_term_draws(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd base = state_.base_at(x);
  Eigen::VectorXd out(n_draws());
  for (Eigen::Index d = 0; d < n_draws(); ++d) out[d] = base.dot(caches_[d].omega);
  return out;
}

Eigen::VectorXd Predictor::default_y_grid(const Eigen::VectorXd& x, int points) const {
  const Eigen::VectorXd mu = mu_draws(x);
  const double pad = 8.0 * state_.hyper().sigma_eps;
  return Eigen::VectorXd::LinSpaced(points, mu.minCoeff() - pad, mu.maxCoeff() + pad);
}

PredictiveDistribution Predictor::predict(const Eigen::VectorXd& x) const {
  return predict(x, default_y_grid(x));
}

PredictiveDistribution Predictor::predict(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y_grid) const {
  const Eigen::Index g = y_grid.size();
  const Eigen::Index nd = n_draws();
  if (g < 2) throw std::invalid_argument("Predictor::predict: grid too small");

  PredictiveDistribution dist;
  dist.y_grid = y_grid;
  dist.cdf.resize(nd, g);
  dist.sys_cdf.resize(nd, g);
  dist.pdf.resize(nd, g);

  // The calibration map depends on the location only through a fixed input
  // embedding, so its value/slope profiles over the quantile axis are
  // precomputed on a fine u-grid per draw and interpolated per y.
  const bool calib = state_.has_calibration();
  const int prof_n = 257;
  Eigen::MatrixXd slope_prof, cum_prof;  // draws x prof_n
  Eigen::VectorXd totals;
  const double prof_step = 1.0 / (prof_n - 1);
  if (calib) {
    const Eigen::VectorXd u_prof = Eigen::VectorXd::LinSpaced(prof_n, 0.0, 1.0);
    Eigen::MatrixXd DC(prof_n, 2 * state_.n_anchor() + state_.n_boundary());
#pragma omp parallel for schedule(static)
    for (int k = 0; k < prof_n; ++k) {
      DC.row(k) = state_.der_cross_row(x, u_prof[k]).transpose();
    }
    slope_prof.resize(nd, prof_n);
    cum_prof.resize(nd, prof_n);
    totals.resize(nd);
#pragma omp parallel for schedule(static)
    for (Eigen::Index d = 0; d < nd; ++d) {
      slope_prof.row(d) =
          (1.0 + kSqrt2Pi * (DC * caches_[d].w).array()).max(0.0).transpose();
      cum_prof(d, 0) = 0.0;
      for (int k = 1; k < prof_n; ++k) {
        cum_prof(d, k) = cum_prof(d, k - 1) +
                         0.5 * (slope_prof(d, k - 1) + slope_prof(d, k)) * prof_step;
      }
      totals[d] = cum_prof(d, prof_n - 1) > 0.0 ? cum_prof(d, prof_n - 1) : 1.0;
    }
  }

  const Eigen::VectorXd mu = mu_draws(x);
  const double sig = state_.hyper().sigma_eps;

  int tail_flags = 0, density_flags = 0;
#pragma omp parallel for schedule(static) reduction(+ : tail_flags, density_flags)
  for (Eigen::Index d = 0; d < nd; ++d) {
    double running = 0.0;
    for (Eigen::Index j = 0; j < g; ++j) {
      const double r = (y_grid[j] - mu[d]) / sig;
      const double u = normal_cdf(r);
      const double f_s = normal_pdf(r) / sig;
      dist.sys_cdf(d, j) = u;
      double cdf_val = u;
      double pdf_val = f_s;
      if (calib) {
        const double pos = u / prof_step;
        const Eigen::Index lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(pos),
                                                       prof_n - 2);
        const double wgt = pos - static_cast<double>(lo);
        const double cum = (1.0 - wgt) * cum_prof(d, lo) + wgt * cum_prof(d, lo + 1);
        const double slope = (1.0 - wgt) * slope_prof(d, lo) + wgt * slope_prof(d, lo + 1);
        cdf_val = cum / totals[d];
        pdf_val = f_s * slope / totals[d];
      }
      cdf_val = std::min(1.0, std::max(0.0, cdf_val));
      running = std::max(running, cdf_val);
      dist.cdf(d, j) = running;
      dist.pdf(d, j) = std::max(pdf_val, 0.0);
    }
    if (dist.cdf(d, 0) > 1e-4 || dist.cdf(d, g - 1) < 1.0 - 1e-4) tail_flags += 1;
    const double mass = trapezoid(dist.pdf.row(d).transpose(), y_grid);
    if (std::fabs(mass - 1.0) > 1e-2) density_flags += 1;
  }
  dist.tail_warning = tail_flags > 0;
  dist.density_warning = density_flags > 0;
  return dist;
}

}  // namespace bne
