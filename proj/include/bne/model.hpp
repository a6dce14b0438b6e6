#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "bne/dataset.hpp"
#include "bne/draw.hpp"
#include "bne/hyper.hpp"
#include "bne/kernels.hpp"
#include "bne/linalg.hpp"

namespace bne {

// Which blocks of the ensemble model are active.
//   bne:      weights + residual process + calibration map
//   bae:      weights + residual process, calibration pinned to the identity
//   original: weights only
enum class ModelKind { bne, bae, original };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
  int m_anchor = 30;
  std::uint64_t anchor_seed = 1;
};

// Immutable probability model over a fixed ensemble-training dataset.
//
// The systematic component is Gaussian: y ~ N(mu(x), sigma_eps^2) with
// mu(x) = sum_k f_k(x) omega_k + delta(x). The distribution function is a
// monotone calibration map applied to the systematic CDF value u, modeled
// as identity plus a GP residual over (quantile embedding, standardized
// inputs) and represented through latent values/derivatives at anchor
// points (equispaced quantile levels replicated at a few input centers).
// The model PDF is multiplicative, f_S times the map slope, so the map can
// reshape but never relocate probability mass. Kernel matrices are
// orthogonalized against their mean functions and Cholesky factors cached.
class ModelState {
 public:
  ModelState(Dataset data, Hyperparams hyper, ModelKind kind = ModelKind::bne,
             ModelConfig cfg = {});

  const Dataset& data() const { return data_; }
  const Hyperparams& hyper() const { return hyper_; }
  ModelKind kind() const { return kind_; }
  Eigen::Index n() const { return data_.size(); }
  Eigen::Index n_weights() const { return data_.base_preds.cols(); }
  Eigen::Index n_anchor() const { return u_levels_.size(); }
  bool has_delta() const { return kind_ != ModelKind::original && n() > 0; }
  bool has_calibration() const { return kind_ == ModelKind::bne && n_anchor() > 0; }

  double y_mean() const { return y_mean_; }
  double y_sd() const { return y_sd_; }
  Eigen::Index n_boundary() const { return z_bound_.rows(); }
  const Eigen::VectorXd& anchor_levels() const { return u_levels_; }
  const Eigen::MatrixXd& anchor_x() const { return x_anchor_; }
  const Eigen::VectorXd& eta_mean() const { return eta_mean_; }

  // Base predictions at out-of-sample locations; set by the fitting pipeline.
  void set_base_predictor(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn) {
    base_predictor_ = std::move(fn);
  }
  Eigen::VectorXd base_at(const Eigen::VectorXd& x) const;

  // Draw with delta = 0 and the calibration map pinned to the identity.
  ParamDraw identity_draw() const;

  // Quantities reused across evaluations of one draw.
  struct DrawCache {
    Eigen::VectorXd omega;
    Eigen::VectorXd delta;
    Eigen::VectorXd mu;       // mu at the training inputs
    Eigen::VectorXd w;        // filtered inverse applied to (eta - eta_mean)
    Eigen::VectorXd m_delta;  // M_delta^{-1} delta
    Eigen::VectorXd v_delta;  // P M_delta^{-1} delta
  };
  DrawCache make_cache(const ParamDraw& draw) const;

  double delta_at(const DrawCache& cache, const Eigen::VectorXd& x) const;
  double mu_at(const DrawCache& cache, const Eigen::VectorXd& x) const;

  double systematic_cdf(const ParamDraw& draw, const Eigen::VectorXd& x, double y) const;
  double calibrated_cdf(const ParamDraw& draw, const Eigen::VectorXd& x, double y) const;
  double model_pdf(const ParamDraw& draw, const Eigen::VectorXd& x, double y) const;

  // Cache-based variants used in hot loops.
  double systematic_cdf(const DrawCache& cache, const Eigen::VectorXd& x, double y) const;
  double calibrated_cdf(const DrawCache& cache, const Eigen::VectorXd& x, double y) const;
  double model_pdf(const DrawCache& cache, const Eigen::VectorXd& x, double y) const;

  // Data log likelihood plus the constraint likelihood (no priors); grad may
  // be null. Gradients accumulate into *grad when provided.
  double data_loglik_grad(const ParamDraw& draw, ParamDraw* grad) const;
  // Gaussian priors over the active blocks.
  double log_prior_grad(const ParamDraw& draw, ParamDraw* grad) const;

  double log_posterior(const ParamDraw& draw) const;
  double log_posterior_grad(const ParamDraw& draw, ParamDraw* grad) const;

  const CholFactor& delta_factor() const { return chol_delta_; }
  const CholFactor& calibration_factor() const { return chol_G_; }
  const Eigen::MatrixXd& delta_projector() const { return P_delta_; }
  ParamDraw zero_like() const;

  // Prior standard deviations per packed coordinate (used to scale the
  // variational family's initial spread).
  Eigen::VectorXd prior_sd_diag() const;

  // Whitened parametrization: theta = (omega, delta, eta) maps to xi with
  // unit-Gaussian prior; HMC and the MAP search run in xi space.
  Eigen::Index whitened_size() const;
  Eigen::VectorXd whiten(const ParamDraw& draw) const;
  ParamDraw unwhiten(const Eigen::VectorXd& xi) const;
  // Chain rule: grad_xi from grad_theta.
  Eigen::VectorXd whiten_grad(const ParamDraw& grad_theta) const;

  // Projected cross-covariance rows against the calibration anchors for the
  // value, slope, and slope-derivative surfaces at one query point, keyed by
  // the systematic CDF value u.
  Eigen::VectorXd val_cross_row(const Eigen::VectorXd& x, double u) const;
  Eigen::VectorXd der_cross_row(const Eigen::VectorXd& x, double u) const;
  Eigen::VectorXd der2_cross_row(const Eigen::VectorXd& x, double u) const;
  // Conditioning weights for a draw: filtered solve over the anchors plus
  // the boundary pins (latent residuals padded with the pin zeros).
  Eigen::VectorXd calib_weights(const ParamDraw& draw) const;
  Eigen::VectorXd solve_calibration(const Eigen::VectorXd& rhs) const;

  double pdf_floor() const { return 1e-12; }

 private:
  Eigen::VectorXd z_of_u(const Eigen::VectorXd& x, double u) const;

  Dataset data_;
  Hyperparams hyper_;
  ModelKind kind_;
  ModelConfig cfg_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> base_predictor_;

  double y_mean_ = 0.0;
  double y_sd_ = 1.0;
  Eigen::VectorXd x_mean_;
  Eigen::VectorXd x_sd_;

  // calibration anchors
  Eigen::VectorXd u_levels_;
  Eigen::VectorXd t_anchor_;
  Eigen::MatrixXd x_anchor_;
  Eigen::MatrixXd z_anchor_;
  Eigen::VectorXd eta_mean_;
  Eigen::MatrixXd P_G_;
  CholFactor chol_G_;       // prior density and whitening
  SpectralSolve filt_G_;    // conditioning (filtered inverse)
  Eigen::MatrixXd P_ext_;   // anchor-side projector extended with the pins
  Eigen::MatrixXd z_bound_;  // boundary pin embeddings (G(0)=0, G(1)=1)

  // residual process
  Eigen::MatrixXd P_delta_;
  CholFactor chol_delta_;
  Eigen::MatrixXd delta_corr_;  // N x K query-side basis correction

  KernelSpec kernel_delta_;
  KernelSpec kernel_g_;

  friend class ModelStateTestAccess;
};

// Constraint likelihood: sum over anchors of
//   log Phi(f/sigma_c) + log Phi(F/sigma_c) + log Phi((1-F)/sigma_c).
double constraint_loglik(const ParamDraw& draw, double sigma_c);

}  // namespace bne
