#pragma once

#include <stdexcept>

namespace bne {

// Model hyperparameters. lambda weighs the CDF-distance penalty in the
// calibrated objective; lambda = 0 recovers the pure Bayes fit.
struct Hyperparams {
  double l_delta = 4.0;
  double l_G = 4.0;
  double sigma_omega = 1.0;
  double sigma_eps = 1.0;
  double sigma_c = 0.01;
  double lambda = 0.0;

  void validate() const {
    if (!(l_delta > 0.0)) throw std::invalid_argument("Hyperparams: l_delta must be > 0");
    if (!(l_G > 0.0)) throw std::invalid_argument("Hyperparams: l_G must be > 0");
    if (!(sigma_omega > 0.0)) throw std::invalid_argument("Hyperparams: sigma_omega must be > 0");
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("Hyperparams: sigma_eps must be > 0");
    if (!(sigma_c > 0.0)) throw std::invalid_argument("Hyperparams: sigma_c must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("Hyperparams: lambda must be >= 0");
  }
};

}  // namespace bne
