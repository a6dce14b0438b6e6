#include "bne/draws_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bne {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(vector_to_json(m.row(r).transpose()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, Eigen::Index cols_hint = 0) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  if (r == 0) return Eigen::MatrixXd(0, cols_hint);
  const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

const char* family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::matern32: return "matern32";
    case KernelFamily::rbf: return "rbf";
    case KernelFamily::periodic: return "periodic";
  }
  return "unknown";
}

KernelFamily family_from_name(const std::string& s) {
  if (s == "matern32") return KernelFamily::matern32;
  if (s == "rbf") return KernelFamily::rbf;
  if (s == "periodic") return KernelFamily::periodic;
  throw std::runtime_error("unknown kernel family '" + s + "'");
}

}  // namespace

void save_draws_csv(const PosteriorDraws& draws, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_draws_csv: cannot open '" + path + "'");
  const Eigen::Index k = draws.draws.empty() ? 0 : draws.draws[0].omega.size();
  const Eigen::Index n = draws.draws.empty() ? 0 : draws.draws[0].delta.size();
  const Eigen::Index m = draws.draws.empty() ? 0 : draws.draws[0].F_latent.size();
  out << "chain,step";
  for (Eigen::Index i = 0; i < k; ++i) out << ",omega_" << (i + 1);
  for (Eigen::Index i = 0; i < n; ++i) out << ",delta_" << (i + 1);
  for (Eigen::Index i = 0; i < m; ++i) out << ",F_" << (i + 1);
  for (Eigen::Index i = 0; i < m; ++i) out << ",f_" << (i + 1);
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (size_t d = 0; d < draws.draws.size(); ++d) {
    out << draws.chain[d] << ',' << draws.step[d];
    const ParamDraw& pd = draws.draws[d];
    for (Eigen::Index i = 0; i < k; ++i) put(pd.omega[i]);
    for (Eigen::Index i = 0; i < n; ++i) put(pd.delta[i]);
    for (Eigen::Index i = 0; i < m; ++i) put(pd.F_latent[i]);
    for (Eigen::Index i = 0; i < m; ++i) put(pd.f_latent[i]);
    out << "\n";
  }
}

PosteriorDraws load_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_draws_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_draws_csv: empty file");
  Eigen::Index k = 0, n = 0, m = 0;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      if (field.rfind("omega_", 0) == 0) ++k;
      if (field.rfind("delta_", 0) == 0) ++n;
      if (field.rfind("F_", 0) == 0) ++m;
    }
  }
  PosteriorDraws out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    if (static_cast<Eigen::Index>(vals.size()) != 2 + k + n + 2 * m) {
      throw std::runtime_error("load_draws_csv: malformed row");
    }
    out.chain.push_back(static_cast<int>(vals[0]));
    out.step.push_back(static_cast<int>(vals[1]));
    ParamDraw d;
    Eigen::Index at = 2;
    d.omega.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) d.omega[i] = vals[at++];
    d.delta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.delta[i] = vals[at++];
    d.F_latent.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) d.F_latent[i] = vals[at++];
    d.f_latent.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) d.f_latent[i] = vals[at++];
    out.draws.push_back(std::move(d));
  }
  return out;
}

void save_fit_meta(const FitResult& fit, const PipelineConfig& cfg, double wall_seconds,
                   const std::string& path) {
  // wall_seconds is intentionally excluded from the file: outputs must be
  // byte-identical across repeated invocations with the same seed.
  (void)wall_seconds;
  json j;
  j["model"] = model_kind_name(fit.state->kind());
  j["seed"] = cfg.seed;
  j["calibrated"] = cfg.calibrated;
  j["lambda"] = fit.state->hyper().lambda;
  j["hyper"] = {{"l_delta", fit.state->hyper().l_delta},
                {"l_G", fit.state->hyper().l_G},
                {"sigma_omega", fit.state->hyper().sigma_omega},
                {"sigma_eps", fit.state->hyper().sigma_eps},
                {"sigma_c", fit.state->hyper().sigma_c}};
  j["model_config"] = {{"m_anchor", cfg.model.m_anchor}, {"anchor_seed", cfg.model.anchor_seed}};
  j["hmc"] = {{"n_chains", cfg.hmc.n_chains},
              {"n_warmup", cfg.hmc.n_warmup},
              {"n_samples", cfg.hmc.n_samples},
              {"leapfrog_steps", cfg.hmc.leapfrog_steps},
              {"target_accept", cfg.hmc.target_accept}};
  j["acceptance_rate"] = fit.draws.accept_rate;
  j["divergences"] = fit.draws.divergences;
  j["divergence_warning"] = fit.draws.divergence_warning;
  j["eb_warnings"] = fit.eb.warnings;
  j["split_fraction"] = cfg.split_fraction;
  if (fit.bases) {
    json rows = json::array();
    for (Eigen::Index r : fit.bases->ensemble_rows) rows.push_back(r);
    j["ensemble_rows"] = rows;
    json models = json::array();
    for (const KernelRidge& krr : fit.bases->models) {
      json mj;
      mj["family"] = family_name(krr.spec().kernel.family);
      mj["length_scale"] = krr.spec().kernel.length_scale;
      mj["period"] = krr.spec().kernel.period;
      mj["amplitude"] = krr.spec().kernel.amplitude;
      mj["ridge"] = krr.spec().ridge;
      mj["train_x"] = matrix_to_json(krr.train_x());
      mj["coef"] = vector_to_json(krr.coef());
      models.push_back(std::move(mj));
    }
    j["base_models"] = std::move(models);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_fit_meta: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

LoadedFit load_fit_meta(const Dataset& raw, const std::string& meta_path) {
  std::ifstream in(meta_path);
  if (!in) throw std::runtime_error("load_fit_meta: cannot open '" + meta_path + "'");
  json j;
  in >> j;

  LoadedFit out;
  out.model_kind = j.at("model").get<std::string>();

  Hyperparams hyper;
  hyper.l_delta = j["hyper"]["l_delta"].get<double>();
  hyper.l_G = j["hyper"]["l_G"].get<double>();
  hyper.sigma_omega = j["hyper"]["sigma_omega"].get<double>();
  hyper.sigma_eps = j["hyper"]["sigma_eps"].get<double>();
  hyper.sigma_c = j["hyper"]["sigma_c"].get<double>();
  hyper.lambda = j.value("lambda", 0.0);

  ModelConfig model_cfg;
  model_cfg.m_anchor = j["model_config"]["m_anchor"].get<int>();
  model_cfg.anchor_seed = j["model_config"]["anchor_seed"].get<std::uint64_t>();

  Dataset ensemble_data;
  if (j.contains("base_models")) {
    out.bases = std::make_shared<BaseEnsemble>();
    for (const json& mj : j["base_models"]) {
      BaseModelSpec spec;
      spec.kernel.family = family_from_name(mj["family"].get<std::string>());
      spec.kernel.length_scale = mj["length_scale"].get<double>();
      spec.kernel.period = mj["period"].get<double>();
      spec.kernel.amplitude = mj["amplitude"].get<double>();
      spec.ridge = mj["ridge"].get<double>();
      spec.cv_length_scale = false;
      out.bases->models.push_back(KernelRidge::restore(
          spec, matrix_from_json(mj["train_x"]), vector_from_json(mj["coef"])));
    }
    for (const json& r : j["ensemble_rows"]) {
      out.bases->ensemble_rows.push_back(r.get<Eigen::Index>());
    }
    ensemble_data = raw.rows(out.bases->ensemble_rows);
    ensemble_data.base_preds = out.bases->predict_many(ensemble_data.x);
  } else {
    if (raw.base_preds.cols() == 0) {
      throw std::runtime_error(
          "load_fit_meta: dataset has no base predictions and the sidecar has no base models");
    }
    ensemble_data = raw;
  }

  out.state = std::make_shared<ModelState>(ensemble_data, hyper,
                                           model_kind_from_name(out.model_kind), model_cfg);
  if (out.bases) {
    auto bases = out.bases;
    out.state->set_base_predictor(
        [bases](const Eigen::VectorXd& x) { return bases->predict_row(x); });
  }
  return out;
}

}  // namespace bne
