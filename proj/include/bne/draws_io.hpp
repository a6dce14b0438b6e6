#pragma once

#include <string>

#include "bne/pipeline.hpp"

namespace bne {

// Columnar draw persistence: one row per draw with chain/step metadata, plus
// a JSON sidecar holding the config, seeds, sampler diagnostics, model
// structure, and the frozen base predictors needed to evaluate the fit at
// new locations.
void save_draws_csv(const PosteriorDraws& draws, const std::string& path);
PosteriorDraws load_draws_csv(const std::string& path);

void save_fit_meta(const FitResult& fit, const PipelineConfig& cfg, double wall_seconds,
                   const std::string& path);

// Reconstructs the fitted state (and base predictors) from the raw dataset
// plus the sidecar. The draws file is loaded separately.
struct LoadedFit {
  std::shared_ptr<ModelState> state;
  std::shared_ptr<BaseEnsemble> bases;
  std::string model_kind;
};

LoadedFit load_fit_meta(const Dataset& raw, const std::string& meta_path);

}  // namespace bne
