#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bne/hyper.hpp"

namespace bne {

// One joint posterior state. Blocks not present in a reduced model (e.g. the
// calibration latents under the additive-only fit) have size zero.
struct ParamDraw {
  Eigen::VectorXd omega;     // ensemble weights, K
  Eigen::VectorXd delta;     // residual values at the training inputs, N
  Eigen::VectorXd F_latent;  // calibration CDF values at the anchors, M
  Eigen::VectorXd f_latent;  // calibration derivative values at the anchors, M

  Eigen::Index packed_size() const {
    return omega.size() + delta.size() + F_latent.size() + f_latent.size();
  }
  Eigen::VectorXd pack() const;
  static ParamDraw unpack(const Eigen::VectorXd& v, Eigen::Index k, Eigen::Index n,
                          Eigen::Index m);
};

// Ordered draw collection with chain/step metadata and sampler diagnostics.
struct PosteriorDraws {
  std::vector<ParamDraw> draws;
  std::vector<int> chain;
  std::vector<int> step;
  double accept_rate = 0.0;
  int divergences = 0;
  bool divergence_warning = false;
  int n_chains = 0;
  int n_warmup = 0;
  std::uint64_t seed = 0;
  std::string model_kind;
  Hyperparams hyper;
};

}  // namespace bne
