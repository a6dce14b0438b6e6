#pragma once

#include <memory>

#include "bne/base_models.hpp"
#include "bne/baselines.hpp"
#include "bne/inference.hpp"

namespace bne {

struct PipelineConfig {
  ModelKind kind = ModelKind::bne;
  HmcConfig hmc;
  EbConfig eb;
  ModelConfig model;
  bool calibrated = false;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::vector<BaseModelSpec> base_specs;  // empty -> default trio
  double split_fraction = 0.5;
};

// One fitted ensemble model: the state (owning the ensemble data), posterior
// draws, empirical-Bayes result, and the frozen base predictors when they
// were trained inside the pipeline.
struct FitResult {
  std::shared_ptr<ModelState> state;
  PosteriorDraws draws;
  EbResult eb;
  std::shared_ptr<BaseEnsemble> bases;  // null when base predictions came with the data
};

// End-to-end fit: splits the data and trains base models when the dataset
// carries no base predictions, selects hyperparameters by empirical Bayes,
// then samples the (optionally calibrated) posterior. The `original` kind
// uses the exact conjugate sampler.
FitResult fit_model(const Dataset& raw, PipelineConfig cfg);

}  // namespace bne
