// Command-line driver: simulate | fit | report | benchmark.
//
// Exit codes: 0 success, 2 usage/validation, 3 numerical failure,
// 4 internal consistency-check failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bne/baselines.hpp"
#include "bne/math_special.hpp"
#include "bne/draws_io.hpp"
#include "bne/metrics.hpp"
#include "bne/pipeline.hpp"
#include "bne/predictive.hpp"
#include "bne/synthetic.hpp"
#include "bne/uncertainty.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConsistency = 4;

std::uint64_t env_default_seed() {
  if (const char* s = std::getenv("BNE_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      // fall through to zero
    }
  }
  return 0;
}

// Flags > JSON config > defaults. Config keys mirror the long flag names
// without the leading dashes.
void apply_config(CLI::App* cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in) throw CLI::ValidationError("--config", "cannot open '" + config_path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
  }
  for (const auto& [key, value] : cfg.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || opt->count() > 0) continue;  // unknown key or flag given
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else {
      text = value.dump();
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct LongRow {
  double x;
  std::string quantity;
  double value;
  double mc_se;
};

void write_long_csv(const std::vector<LongRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "x,quantity,value,mc_se\n";
  for (const auto& r : rows) {
    out << fmt(r.x) << ',' << r.quantity << ',' << fmt(r.value) << ',' << fmt(r.mc_se)
        << "\n";
  }
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Eigen::Index n = 100;
  std::uint64_t seed = env_default_seed();
  double alpha_scale = 1.0;
  double alpha_const = 0.0;
  std::string out;
  std::string truth_out;
  std::string config;
};

int run_simulate(const SimulateArgs& args) {
  bne::SyntheticSpec spec;
  spec.n = args.n;
  spec.seed = args.seed;
  spec.alpha_scale = args.alpha_scale;
  spec.alpha_const = args.alpha_const;
  spec.validate();
  const bne::SimulationResult result = bne::simulate(spec);
  bne::save_csv(result.data, args.out);
  if (!args.truth_out.empty()) {
    std::ofstream out(args.truth_out);
    out << result.truth.to_json() << "\n";
  }
  std::cout << "wrote " << spec.n << " rows to " << args.out << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data_path;
  std::string model = "bne";
  bool calibrated = false;
  double lambda = 1.0;
  int chains = 4;
  int warmup = 500;
  int samples = 1000;
  int leapfrog = 16;
  int m_anchor = 30;
  std::uint64_t seed = env_default_seed();
  std::string out = "draws.csv";
  std::string meta = "meta.json";
  std::string config;
};

int run_fit(const FitArgs& args) {
  const bne::Dataset data = bne::load_csv(args.data_path);
  const auto t0 = std::chrono::steady_clock::now();

  if (args.model == "stacking") {
    const bne::StackingFit fit = bne::fit_stacking(data, bne::default_base_specs(), args.seed);
    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot open '" + args.out + "'");
    for (Eigen::Index k = 0; k < fit.weights.size(); ++k) {
      out << (k ? "," : "") << "pi_" << (k + 1);
    }
    for (Eigen::Index k = 0; k < fit.sigmas.size(); ++k) out << ",sigma_" << (k + 1);
    out << "\n";
    for (Eigen::Index k = 0; k < fit.weights.size(); ++k) {
      out << (k ? "," : "") << fmt(fit.weights[k]);
    }
    for (Eigen::Index k = 0; k < fit.sigmas.size(); ++k) out << ',' << fmt(fit.sigmas[k]);
    out << "\n";
    json meta;
    meta["model"] = "stacking";
    meta["seed"] = args.seed;
    meta["converged"] = fit.converged;
    if (!fit.converged) {
      std::cerr << "warning: stacking updates did not converge within the iteration cap\n";
    }
    std::ofstream mo(args.meta);
    mo << meta.dump(2) << "\n";
    std::cout << "stacking weights written to " << args.out << "\n";
    return kExitOk;
  }

  bne::PipelineConfig cfg;
  cfg.kind = bne::model_kind_from_name(args.model);
  cfg.hmc.n_chains = args.chains;
  cfg.hmc.n_warmup = args.warmup;
  cfg.hmc.n_samples = args.samples;
  cfg.hmc.leapfrog_steps = args.leapfrog;
  cfg.hmc.seed = args.seed;
  cfg.model.m_anchor = args.m_anchor;
  cfg.calibrated = args.calibrated;
  cfg.lambda = args.lambda;
  cfg.seed = args.seed;
  const bne::FitResult fit = bne::fit_model(data, cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  bne::save_draws_csv(fit.draws, args.out);
  bne::save_fit_meta(fit, cfg, wall, args.meta);
  std::cout << "model=" << args.model << " draws=" << fit.draws.draws.size()
            << " accept=" << fmt(fit.draws.accept_rate)
            << " divergences=" << fit.draws.divergences << " wall=" << fmt(wall) << "s\n";
  if (fit.draws.divergence_warning) {
    std::cerr << "warning: more than 20% of post-warmup trajectories diverged\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  std::string what = "metrics";
  std::string data_path;
  std::string draws_path;
  std::string meta_path;
  std::string truth_path;
  std::string reduced_draws;  // calibration pinned (additive) fit
  std::string reduced_meta;
  std::string weights_draws;  // weights-only fit
  std::string weights_meta;
  std::string decomposition = "entropy";
  int grid_points = 41;
  int thin = 1;
  std::string out = "report.csv";
  std::string config;
};

Eigen::MatrixXd location_grid(const bne::Dataset& data, int q, bool have_bases) {
  if (!have_bases) {
    // no frozen base predictors: evaluate at the training inputs only
    const Eigen::Index take = std::min<Eigen::Index>(q, data.size());
    return data.x.topRows(take);
  }
  const double lo = data.x.col(0).minCoeff();
  const double hi = data.x.col(0).maxCoeff();
  Eigen::MatrixXd locs(q, 1);
  locs.col(0) = Eigen::VectorXd::LinSpaced(q, lo, hi);
  return locs;
}

int run_report(const ReportArgs& args) {
  const bne::Dataset data = bne::load_csv(args.data_path);
  const bne::LoadedFit fit = bne::load_fit_meta(data, args.meta_path);
  bne::PosteriorDraws draws = bne::load_draws_csv(args.draws_path);
  draws.model_kind = fit.model_kind;
  if (draws.draws.empty()) throw CLI::ValidationError("--draws", "no draws in file");
  const bne::Predictor pred(*fit.state, draws, args.thin);
  const bool has_delta = fit.state->has_delta();
  const bool has_g = fit.state->has_calibration();

  std::vector<LongRow> rows;
  if (args.what == "metrics") {
    const bne::Dataset& eval = data;
    Eigen::VectorXd preds(eval.size());
    std::vector<bne::PredictiveDistribution> dists;
    dists.reserve(eval.size());
    for (Eigen::Index i = 0; i < eval.size(); ++i) {
      const Eigen::VectorXd x = eval.x.row(i).transpose();
      dists.push_back(pred.predict(x));
      double m = 0.0;
      for (Eigen::Index d = 0; d < dists.back().n_draws(); ++d) {
        m += bne::predictive_mean(dists.back(), d);
      }
      preds[i] = m / dists.back().n_draws();
    }
    bne::MetricReport report;
    report.sample_size = eval.size();
    report.rmse_empirical = bne::rmse(preds, eval.y);
    Eigen::Index eval_idx = 0;
    report.coverage = bne::coverage_index(
        [&](const Eigen::VectorXd& x, double level) {
          for (Eigen::Index i = 0; i < eval.size(); ++i) {
            if (eval.x.row(i).transpose() == x) {
              return bne::predictive_interval(dists[i], level);
            }
          }
          return bne::predictive_interval(pred.predict(x), level);
        },
        eval);
    (void)eval_idx;
    const bne::CvmGrid grid = bne::CvmGrid::default_for(eval.y);
    double cvm = 0.0;
    for (Eigen::Index d = 0; d < pred.n_draws(); ++d) {
      cvm += bne::cvm_empirical(*fit.state, pred.draw(d), grid, eval);
    }
    report.cvm = cvm / pred.n_draws();

    if (!args.truth_path.empty()) {
      std::ifstream in(args.truth_path);
      std::stringstream ss;
      ss << in.rdbuf();
      const bne::TruthHandle truth = bne::TruthHandle::from_json(ss.str());
      Eigen::VectorXd truth_means(eval.size());
      for (Eigen::Index i = 0; i < eval.size(); ++i) {
        truth_means[i] = truth.mean(eval.x(i, 0));
      }
      report.rmse_vs_truth = bne::rmse(preds, truth_means);
      const double sd = std::sqrt((eval.y.array() - eval.y.mean()).square().sum() /
                                  std::max<Eigen::Index>(eval.size() - 1, 1));
      const Eigen::VectorXd y_grid = Eigen::VectorXd::LinSpaced(
          257, eval.y.minCoeff() - 2 * sd, eval.y.maxCoeff() + 2 * sd);
      double l1 = 0.0;
      for (Eigen::Index i = 0; i < eval.size(); ++i) {
        const bne::PredictiveDistribution di =
            pred.predict(eval.x.row(i).transpose(), y_grid);
        const Eigen::VectorXd mean_cdf = di.mean_cdf();
        Eigen::VectorXd gap(y_grid.size());
        for (Eigen::Index j = 0; j < y_grid.size(); ++j) {
          gap[j] = std::fabs(mean_cdf[j] - truth.cdf(y_grid[j], eval.x(i, 0)));
        }
        l1 += bne::trapezoid(gap, y_grid);
      }
      report.l1_vs_truth = l1;
    }

    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot open '" + args.out + "'");
    out << "rmse_empirical,rmse_vs_truth,l1_vs_truth,coverage_index,cvm,sample_size\n";
    out << fmt(report.rmse_empirical) << ','
        << (report.rmse_vs_truth ? fmt(*report.rmse_vs_truth) : "") << ','
        << (report.l1_vs_truth ? fmt(*report.l1_vs_truth) : "") << ','
        << fmt(report.coverage) << ',' << fmt(report.cvm) << ',' << report.sample_size
        << "\n";
    json j;
    j["rmse_empirical"] = report.rmse_empirical;
    if (report.rmse_vs_truth) j["rmse_vs_truth"] = *report.rmse_vs_truth;
    if (report.l1_vs_truth) j["l1_vs_truth"] = *report.l1_vs_truth;
    j["coverage_index"] = report.coverage;
    j["cvm"] = report.cvm;
    j["sample_size"] = report.sample_size;
    std::ofstream jout(args.out + ".json");
    jout << j.dump(2) << "\n";
    std::cout << "metrics written to " << args.out << "\n";
    return kExitOk;
  }

  if (args.what == "decompose") {
    std::unique_ptr<bne::Predictor> reduced, weights_only;
    bne::LoadedFit reduced_fit, weights_fit;
    bne::PosteriorDraws reduced_draws, weights_draws;
    if (!args.reduced_draws.empty() && !args.weights_draws.empty()) {
      reduced_fit = bne::load_fit_meta(data, args.reduced_meta);
      reduced_draws = bne::load_draws_csv(args.reduced_draws);
      reduced = std::make_unique<bne::Predictor>(*reduced_fit.state, reduced_draws, args.thin);
      weights_fit = bne::load_fit_meta(data, args.weights_meta);
      weights_draws = bne::load_draws_csv(args.weights_draws);
      weights_only =
          std::make_unique<bne::Predictor>(*weights_fit.state, weights_draws, args.thin);
    }
    const Eigen::MatrixXd locs = location_grid(data, args.grid_points, fit.bases != nullptr);
    bool sum_check_ok = true;
    for (Eigen::Index i = 0; i < locs.rows(); ++i) {
      const Eigen::VectorXd x = locs.row(i).transpose();
      const bne::PredictiveDistribution dist = pred.predict(x);
      if (args.decomposition == "entropy") {
        const bne::EntropyRow row = bne::entropy_decompose(dist);
        rows.push_back({locs(i, 0), "total_entropy", row.total_entropy, row.se_total});
        rows.push_back({locs(i, 0), "aleatoric", row.aleatoric, row.se_aleatoric});
        rows.push_back({locs(i, 0), "epistemic", row.epistemic, row.se_epistemic});
        const double gap = std::fabs(row.aleatoric + row.epistemic - row.total_entropy);
        if (gap > 3.0 * (row.se_total + row.se_aleatoric + row.se_epistemic) + 1e-9) {
          sum_check_ok = false;
        }
        if (reduced && weights_only) {
          const bne::EpistemicSplit split = bne::epistemic_split(
              dist, reduced->predict(x, dist.y_grid), weights_only->predict(x, dist.y_grid));
          rows.push_back({locs(i, 0), "structural_G", split.structural_g,
                          split.se_structural_g});
          rows.push_back({locs(i, 0), "structural_delta", split.structural_delta,
                          split.se_structural_delta});
          rows.push_back({locs(i, 0), "parametric", split.parametric, split.se_parametric});
          const double tgap = std::fabs(split.structural_g + split.structural_delta +
                                        split.parametric - row.epistemic);
          if (tgap > 3.0 * (split.se_structural_g + split.se_structural_delta +
                            split.se_parametric + row.se_epistemic) + 1e-9) {
            sum_check_ok = false;
          }
        }
      } else {
        if (reduced && weights_only) {
          const bne::VarianceSplit split = bne::variance_decompose(
              dist, reduced->predict(x, dist.y_grid), weights_only->predict(x, dist.y_grid));
          rows.push_back({locs(i, 0), "structural_G", split.structural_g,
                          split.se_structural_g});
          rows.push_back({locs(i, 0), "structural_delta", split.structural_delta,
                          split.se_structural_delta});
          rows.push_back({locs(i, 0), "parametric", split.parametric, split.se_parametric});
          rows.push_back({locs(i, 0), "aleatoric", split.aleatoric, split.se_aleatoric});
          rows.push_back({locs(i, 0), "total_variance", split.total, 0.0});
          const double gap = std::fabs(split.structural_g + split.structural_delta +
                                       split.parametric + split.aleatoric - split.total);
          if (gap > 3.0 * (split.se_structural_g + split.se_structural_delta +
                           split.se_parametric + split.se_aleatoric) + 1e-9) {
            sum_check_ok = false;
          }
        } else {
          const bne::VarianceSplit split = bne::variance_decompose(dist, dist, dist);
          rows.push_back({locs(i, 0), "parametric", split.parametric, split.se_parametric});
          rows.push_back({locs(i, 0), "aleatoric", split.aleatoric, split.se_aleatoric});
          rows.push_back({locs(i, 0), "total_variance", split.total, 0.0});
        }
      }
    }
    write_long_csv(rows, args.out);
    if (!sum_check_ok) {
      std::cerr << "decomposition sum check failed\n";
      return kExitConsistency;
    }
    std::cout << "decomposition written to " << args.out << "\n";
    return kExitOk;
  }

  // bias report
  const Eigen::MatrixXd locs = location_grid(data, args.grid_points, fit.bases != nullptr);
  for (Eigen::Index i = 0; i < locs.rows(); ++i) {
    const Eigen::VectorXd x = locs.row(i).transpose();
    if (has_delta) {
      const Eigen::VectorXd d_delta = pred.delta_draws(x);
      const double mean = d_delta.mean();
      const double var =
          (d_delta.array() - mean).square().sum() / std::max<Eigen::Index>(d_delta.size() - 1, 1);
      rows.push_back({locs(i, 0), "D_delta_mean", mean,
                      std::sqrt(var / static_cast<double>(d_delta.size()))});
      rows.push_back({locs(i, 0), "P_D_delta_pos", bne::bias_exceedance(d_delta), 0.0});
    }
    if (has_g) {
      const bne::PredictiveDistribution dist = pred.predict(x);
      Eigen::VectorXd d_g(dist.n_draws());
      for (Eigen::Index d = 0; d < dist.n_draws(); ++d) {
        d_g[d] = bne::trapezoid(
            (dist.sys_cdf.row(d) - dist.cdf.row(d)).transpose().eval(), dist.y_grid);
      }
      rows.push_back({locs(i, 0), "D_G_mean", d_g.mean(), 0.0});
      rows.push_back({locs(i, 0), "P_D_G_pos", bne::bias_exceedance(d_g), 0.0});
      for (auto [stat, name] :
           {std::pair{bne::Statistic::variance, "D_G_variance"},
            std::pair{bne::Statistic::skewness, "D_G_skewness"},
            std::pair{bne::Statistic::kurtosis, "D_G_kurtosis"}}) {
        try {
          const Eigen::VectorXd ds = bne::statistic_bias(dist, stat);
          rows.push_back({locs(i, 0), name, ds.mean(), 0.0});
          rows.push_back(
              {locs(i, 0), std::string("P_") + name + "_pos", bne::bias_exceedance(ds), 0.0});
        } catch (const std::exception&) {
          // undefined statistic at this location; omit the rows
        }
      }
    }
  }
  write_long_csv(rows, args.out);
  std::cout << "bias report written to " << args.out << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- benchmark

struct BenchmarkArgs {
  std::string n_list = "100,200,400";
  int seeds = 5;
  std::string models = "bne,bae,original,stacking";
  double alpha_scale = 4.0;
  int chains = 2;
  int warmup = 300;
  int samples = 300;
  int thin = 3;
  int eval_points = 41;
  int jobs = 1;
  std::uint64_t seed = env_default_seed();
  std::string out = "benchmark.csv";
  std::string config;
};

struct BenchCell {
  std::string model;
  Eigen::Index n;
  unsigned seed;
};

struct BenchRow {
  std::string model;
  Eigen::Index n;
  unsigned seed;
  std::string metric;
  double value;
};

std::vector<BenchRow> run_cell(const BenchCell& cell, const BenchmarkArgs& args) {
  bne::SyntheticSpec spec;
  spec.n = cell.n;
  spec.seed = cell.seed;
  spec.alpha_scale = args.alpha_scale;
  const bne::SimulationResult sim = bne::simulate(spec);

  bne::SyntheticSpec held_spec = spec;
  held_spec.n = 400;
  held_spec.seed = cell.seed + 900001;
  const bne::SimulationResult held = bne::simulate(held_spec);

  // truth metrics evaluate at held-out locations drawn from the input
  // distribution, matching the test-set summation of the L1 distance
  Eigen::MatrixXd eval_x(args.eval_points, 1);
  eval_x.col(0) = held.data.x.col(0).head(args.eval_points);
  Eigen::VectorXd truth_means(args.eval_points);
  for (int i = 0; i < args.eval_points; ++i) {
    truth_means[i] = sim.truth.mean(eval_x(i, 0));
  }
  const double sd_y = std::sqrt((sim.data.y.array() - sim.data.y.mean()).square().sum() /
                                std::max<Eigen::Index>(sim.data.size() - 1, 1));
  const Eigen::VectorXd y_grid = Eigen::VectorXd::LinSpaced(
      321, sim.data.y.minCoeff() - 2 * sd_y, sim.data.y.maxCoeff() + 2 * sd_y);

  std::vector<BenchRow> rows;
  auto push = [&](const std::string& metric, double value) {
    rows.push_back({cell.model, cell.n, cell.seed, metric, value});
  };

  if (cell.model == "stacking") {
    const bne::BaseEnsemble bases =
        bne::fit_base_models(sim.data, bne::default_base_specs(), cell.seed);
    const bne::StackingFit fit = bne::fit_stacking_pretrained(bases.ensemble_data, bases);
    Eigen::VectorXd preds(args.eval_points);
    double l1 = 0.0;
    for (int i = 0; i < args.eval_points; ++i) {
      const Eigen::VectorXd x = eval_x.row(i).transpose();
      preds[i] = fit.mean(x);
      Eigen::VectorXd gap(y_grid.size());
      for (Eigen::Index j = 0; j < y_grid.size(); ++j) {
        gap[j] = std::fabs(fit.cdf(x, y_grid[j]) - sim.truth.cdf(y_grid[j], x[0]));
      }
      l1 += bne::trapezoid(gap, y_grid);
    }
    push("rmse_vs_truth", bne::rmse(preds, truth_means));
    push("l1_vs_truth", l1);
    push("coverage_index",
         bne::coverage_index(
             [&](const Eigen::VectorXd& x, double level) { return fit.interval(x, level); },
             held.data));
    return rows;
  }

  bne::PipelineConfig cfg;
  cfg.kind = bne::model_kind_from_name(cell.model);
  cfg.hmc.n_chains = args.chains;
  cfg.hmc.n_warmup = args.warmup;
  cfg.hmc.n_samples = args.samples;
  cfg.hmc.seed = cell.seed;
  cfg.seed = cell.seed;
  const bne::FitResult fit = bne::fit_model(sim.data, cfg);
  const bne::Predictor pred(*fit.state, fit.draws, args.thin);

  Eigen::VectorXd preds(args.eval_points);
  double l1 = 0.0;
  for (int i = 0; i < args.eval_points; ++i) {
    const Eigen::VectorXd x = eval_x.row(i).transpose();
    const bne::PredictiveDistribution dist = pred.predict(x, y_grid);
    const Eigen::VectorXd mean_cdf = dist.mean_cdf();
    double m = 0.0;
    for (Eigen::Index d = 0; d < dist.n_draws(); ++d) m += bne::predictive_mean(dist, d);
    preds[i] = m / dist.n_draws();
    Eigen::VectorXd gap(y_grid.size());
    for (Eigen::Index j = 0; j < y_grid.size(); ++j) {
      gap[j] = std::fabs(mean_cdf[j] - sim.truth.cdf(y_grid[j], x[0]));
    }
    l1 += bne::trapezoid(gap, y_grid);
  }
  push("rmse_vs_truth", bne::rmse(preds, truth_means));
  push("l1_vs_truth", l1);
  push("coverage_index", bne::coverage_index(pred, held.data));
  push("accept_rate", fit.draws.accept_rate);
  return rows;
}

int run_benchmark(const BenchmarkArgs& args) {
  std::vector<Eigen::Index> ns;
  {
    std::stringstream ss(args.n_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) ns.push_back(std::stoll(tok));
  }
  std::vector<std::string> models;
  {
    std::stringstream ss(args.models);
    std::string tok;
    while (std::getline(ss, tok, ',')) models.push_back(tok);
  }
  std::vector<BenchCell> cells;
  for (const std::string& m : models) {
    for (Eigen::Index n : ns) {
      for (int s = 0; s < args.seeds; ++s) {
        cells.push_back({m, n, static_cast<unsigned>(args.seed + s)});
      }
    }
  }
  std::vector<std::vector<BenchRow>> results(cells.size());
  std::vector<std::string> failures(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(args.jobs) if (args.jobs > 1)
  for (size_t c = 0; c < cells.size(); ++c) {
    try {
      results[c] = run_cell(cells[c], args);
    } catch (const std::exception& e) {
      failures[c] = e.what();
    }
  }
  for (size_t c = 0; c < cells.size(); ++c) {
    if (!failures[c].empty()) {
      std::cerr << "benchmark cell (" << cells[c].model << ", n=" << cells[c].n
                << ", seed=" << cells[c].seed << ") failed: " << failures[c] << "\n";
      return kExitNumerical;
    }
  }
  std::ofstream out(args.out);
  if (!out) throw std::runtime_error("cannot open '" + args.out + "'");
  out << "model,n,seed,metric,value\n";
  for (const auto& rows : results) {
    for (const auto& r : rows) {
      out << r.model << ',' << r.n << ',' << r.seed << ',' << r.metric << ','
          << fmt(r.value) << "\n";
    }
  }
  std::cout << "benchmark matrix written to " << args.out << " (" << cells.size()
            << " cells)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonparametric ensemble toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--n", sim_args.n, "number of observations")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_args.seed, "RNG seed (default from BNE_SEED)");
  sim->add_option("--alpha-scale", sim_args.alpha_scale,
                  "stretch of the noise-shape decay, alpha(x) = 3 exp(-|x|/scale)");
  sim->add_option("--alpha-const", sim_args.alpha_const,
                  "constant Weibull shape override (0 = use alpha(x))");
  sim->add_option("--out", sim_args.out, "output CSV path")->required();
  sim->add_option("--truth-out", sim_args.truth_out, "write the truth handle JSON here");
  sim->add_option("--config", sim_args.config, "JSON config file (flags win)");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit an ensemble model");
  fit->add_option("--data", fit_args.data_path, "input dataset CSV")->required();
  fit->add_option("--model", fit_args.model, "bne | bae | original | stacking")
      ->check(CLI::IsMember({"bne", "bae", "original", "stacking"}));
  fit->add_flag("--calibrated", fit_args.calibrated,
                "use the CDF-distance-penalized generalized posterior");
  fit->add_option("--lambda", fit_args.lambda, "penalty weight for --calibrated")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--chains", fit_args.chains)->check(CLI::PositiveNumber);
  fit->add_option("--warmup", fit_args.warmup)->check(CLI::PositiveNumber);
  fit->add_option("--samples", fit_args.samples)->check(CLI::PositiveNumber);
  fit->add_option("--leapfrog", fit_args.leapfrog)->check(CLI::PositiveNumber);
  fit->add_option("--m-anchor", fit_args.m_anchor, "calibration anchor count")
      ->check(CLI::PositiveNumber);
  fit->add_option("--seed", fit_args.seed);
  fit->add_option("--out", fit_args.out, "draws CSV output");
  fit->add_option("--meta", fit_args.meta, "metadata JSON output");
  fit->add_option("--config", fit_args.config, "JSON config file (flags win)");

  ReportArgs rep_args;
  CLI::App* rep = app.add_subcommand("report", "metrics / decomposition / bias reports");
  rep->add_option("--what", rep_args.what, "metrics | decompose | bias")
      ->check(CLI::IsMember({"metrics", "decompose", "bias"}));
  rep->add_option("--data", rep_args.data_path)->required();
  rep->add_option("--draws", rep_args.draws_path)->required();
  rep->add_option("--meta", rep_args.meta_path)->required();
  rep->add_option("--truth", rep_args.truth_path, "truth JSON for vs-truth metrics");
  rep->add_option("--reduced-draws", rep_args.reduced_draws,
                  "draws of the calibration-pinned fit (full split)");
  rep->add_option("--reduced-meta", rep_args.reduced_meta);
  rep->add_option("--weights-draws", rep_args.weights_draws,
                  "draws of the weights-only fit (full split)");
  rep->add_option("--weights-meta", rep_args.weights_meta);
  rep->add_option("--decomposition", rep_args.decomposition, "entropy | variance")
      ->check(CLI::IsMember({"entropy", "variance"}));
  rep->add_option("--grid-points", rep_args.grid_points)->check(CLI::PositiveNumber);
  rep->add_option("--thin", rep_args.thin)->check(CLI::PositiveNumber);
  rep->add_option("--out", rep_args.out);
  rep->add_option("--config", rep_args.config, "JSON config file (flags win)");

  BenchmarkArgs bench_args;
  CLI::App* bench = app.add_subcommand("benchmark", "run the (model, n, seed) matrix");
  bench->add_option("--n-list", bench_args.n_list, "comma-separated sample sizes");
  bench->add_option("--seeds", bench_args.seeds, "seeds per cell")->check(CLI::PositiveNumber);
  bench->add_option("--models", bench_args.models, "comma-separated model list");
  bench->add_option("--alpha-scale", bench_args.alpha_scale);
  bench->add_option("--chains", bench_args.chains)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_args.warmup)->check(CLI::PositiveNumber);
  bench->add_option("--samples", bench_args.samples)->check(CLI::PositiveNumber);
  bench->add_option("--thin", bench_args.thin)->check(CLI::PositiveNumber);
  bench->add_option("--eval-points", bench_args.eval_points)->check(CLI::PositiveNumber);
  bench->add_option("--jobs", bench_args.jobs, "concurrent cells")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_args.seed, "base seed");
  bench->add_option("--out", bench_args.out);
  bench->add_option("--config", bench_args.config, "JSON config file (flags win)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (sim->parsed()) {
      apply_config(sim, sim_args.config);
      return run_simulate(sim_args);
    }
    if (fit->parsed()) {
      apply_config(fit, fit_args.config);
      return run_fit(fit_args);
    }
    if (rep->parsed()) {
      apply_config(rep, rep_args.config);
      return run_report(rep_args);
    }
    if (bench->parsed()) {
      apply_config(bench, bench_args.config);
      return run_benchmark(bench_args);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
