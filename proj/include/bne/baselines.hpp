#pragma once

#include "bne/base_models.hpp"
#include "bne/draw.hpp"
#include "bne/inference.hpp"
#include "bne/uncertainty.hpp"

namespace bne {

// Conjugate weights-only ensemble: Gaussian prior over the weights, Gaussian
// likelihood, exact posterior sampling. sigma_eps is profiled by maximizing
// the Gaussian marginal likelihood.
PosteriorDraws fit_original_ensemble(const Dataset& data, Hyperparams hyper,
                                     int n_draws = 1000, std::uint64_t seed = 0);

// Residual-augmented ensemble with the calibration map pinned to the
// identity; same HMC machinery as the full model with the latent block
// frozen.
PosteriorDraws fit_bae(const Dataset& data, const Hyperparams& hyper, const HmcConfig& cfg,
                       const ModelConfig& model_cfg = {});

// Non-adaptive mixture stacking with leave-one-out-calibrated weights.
struct StackingFit {
  Eigen::VectorXd weights;
  Eigen::VectorXd sigmas;
  std::vector<KernelRidge> models;
  bool converged = false;

  double mean(const Eigen::VectorXd& x) const;
  double cdf(const Eigen::VectorXd& x, double y) const;
  Interval interval(const Eigen::VectorXd& x, double level) const;
};

StackingFit fit_stacking(const Dataset& data,
                         const std::vector<BaseModelSpec>& specs = default_base_specs(),
                         std::uint64_t seed = 0, int max_iters = 500);

// Stacking over pre-trained base predictors (two-stage protocol parity with
// the other ensembles): weights from the mixture likelihood of the given
// base predictions, sigmas from the per-model residuals.
StackingFit fit_stacking_pretrained(const Dataset& ens_data, const BaseEnsemble& bases,
                                    int max_iters = 500);

}  // namespace bne
