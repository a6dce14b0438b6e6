#include "bne/pipeline.hpp"

#include <stdexcept>

namespace bne {

FitResult fit_model(const Dataset& raw, PipelineConfig cfg) {
  FitResult result;
  Dataset ensemble_data;
  if (raw.base_preds.cols() > 0) {
    ensemble_data = raw;
  } else {
    const auto& specs = cfg.base_specs.empty() ? default_base_specs() : cfg.base_specs;
    result.bases = std::make_shared<BaseEnsemble>(
        fit_base_models(raw, specs, cfg.seed, cfg.split_fraction));
    ensemble_data = result.bases->ensemble_data;
  }

  if (cfg.kind == ModelKind::original) {
    Hyperparams hyper = cfg.eb.init;
    const int n_draws = cfg.hmc.n_chains * cfg.hmc.n_samples;
    result.draws = fit_original_ensemble(ensemble_data, hyper, n_draws, cfg.seed);
    result.state = std::make_shared<ModelState>(ensemble_data, result.draws.hyper,
                                                ModelKind::original, cfg.model);
  } else {
    EbConfig eb_cfg = cfg.eb;
    eb_cfg.model = cfg.model;
    result.eb = empirical_bayes_fit(ensemble_data, cfg.kind, eb_cfg);
    Hyperparams hyper = result.eb.hyper;
    hyper.lambda = cfg.calibrated ? cfg.lambda : 0.0;
    result.state = std::make_shared<ModelState>(ensemble_data, hyper, cfg.kind, cfg.model);

    HmcConfig hmc = cfg.hmc;
    hmc.seed = cfg.seed;
    if (cfg.calibrated && hyper.lambda > 0.0) {
      const CalibratedObjective objective(*result.state,
                                          CvmGrid::default_for(ensemble_data.y));
      result.draws =
          sample_posterior(*result.state, hmc, &objective, &result.eb.map_draw);
    } else {
      result.draws = sample_posterior(*result.state, hmc, nullptr, &result.eb.map_draw);
    }
  }

  if (result.bases) {
    auto bases = result.bases;
    result.state->set_base_predictor(
        [bases](const Eigen::VectorXd& x) { return bases->predict_row(x); });
  }
  return result;
}

}  // namespace bne
