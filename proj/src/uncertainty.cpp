#include "bne/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

#include "bne/math_special.hpp"

namespace bne {

double predictive_mean_from_cdf(const Eigen::VectorXd& cdf, const Eigen::VectorXd& y_grid) {
  // The indicator part integrates exactly to the length of the positive part
  // of the grid; only the CDF needs quadrature.
  const Eigen::Index g = y_grid.size();
  const double positive_len =
      std::max(y_grid[g - 1], 0.0) - std::max(y_grid[0], 0.0);
  return positive_len - trapezoid(cdf, y_grid);
}

double predictive_mean(const PredictiveDistribution& dist, Eigen::Index draw) {
  return predictive_mean_from_cdf(dist.cdf.row(draw).transpose(), dist.y_grid);
}

namespace {

// Var(y) via E[s] = s(0) + integral of s'(y) [I(y>0) - F(y)] dy with
// s(y) = (y - mean)^2; the indicator piece is integrated analytically.
double variance_from_cdf(const Eigen::VectorXd& cdf, const Eigen::VectorXd& y_grid,
                         double mean) {
  const Eigen::Index g = y_grid.size();
  const double hi = y_grid[g - 1];
  const double lo = std::max(y_grid[0], 0.0);
  const double indicator_part =
      hi > 0.0 ? (hi - mean) * (hi - mean) - (lo - mean) * (lo - mean) : 0.0;
  Eigen::VectorXd integrand(g);
  for (Eigen::Index j = 0; j < g; ++j) {
    integrand[j] = 2.0 * (y_grid[j] - mean) * cdf[j];
  }
  const double var = mean * mean + indicator_part - trapezoid(integrand, y_grid);
  return std::max(var, 0.0);
}

}  // namespace

std::vector<MeanParts> mean_decomposition(const Predictor& pred, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& y_grid) {
  const PredictiveDistribution dist = pred.predict(x, y_grid);
  const Eigen::VectorXd ens = pred.ensemble_term_draws(x);
  const Eigen::VectorXd del = pred.delta_draws(x);
  std::vector<MeanParts> out(dist.n_draws());
  for (Eigen::Index d = 0; d < dist.n_draws(); ++d) {
    out[d].ensemble_term = ens[d];
    out[d].d_delta = del[d];
    out[d].d_g = trapezoid(
        (dist.sys_cdf.row(d) - dist.cdf.row(d)).transpose().eval(), dist.y_grid);
  }
  return out;
}

std::vector<MeanParts> mean_decomposition(const Predictor& pred, const Eigen::VectorXd& x) {
  return mean_decomposition(pred, x, pred.default_y_grid(x));
}

double bias_exceedance(const Eigen::VectorXd& d_draws) {
  if (d_draws.size() < 2) throw std::invalid_argument("bias_exceedance: need >= 2 draws");
  double score = 0.0;
  for (Eigen::Index i = 0; i < d_draws.size(); ++i) {
    if (d_draws[i] > 0.0) {
      score += 1.0;
    } else if (d_draws[i] == 0.0) {
      score += 0.5;
    }
  }
  return score / static_cast<double>(d_draws.size());
}

Eigen::VectorXd statistic_bias(const PredictiveDistribution& dist, Statistic stat) {
  const Eigen::Index nd = dist.n_draws();
  const Eigen::Index g = dist.y_grid.size();
  Eigen::VectorXd out(nd);
  for (Eigen::Index d = 0; d < nd; ++d) {
    // Two-pass moments from the calibrated CDF.
    const double mean = predictive_mean(dist, d);
    const double var = variance_from_cdf(dist.cdf.row(d).transpose(), dist.y_grid, mean);
    const double sd = std::sqrt(var);
    if (stat != Statistic::variance && sd < 1e-8) {
      throw std::runtime_error("statistic_bias: predictive SD below 1e-8, statistic undefined");
    }
    Eigen::VectorXd sprime(g);
    for (Eigen::Index j = 0; j < g; ++j) {
      const double c = dist.y_grid[j] - mean;
      switch (stat) {
        case Statistic::variance: sprime[j] = 2.0 * c; break;
        case Statistic::skewness: sprime[j] = 3.0 * c * c / (sd * sd * sd); break;
        case Statistic::kurtosis: sprime[j] = 4.0 * c * c * c / (sd * sd * sd * sd); break;
      }
    }
    Eigen::VectorXd gap(g);
    for (Eigen::Index j = 0; j < g; ++j) gap[j] = dist.sys_cdf(d, j) - dist.cdf(d, j);
    out[d] = trapezoid(sprime.cwiseProduct(gap).eval(), dist.y_grid);
  }
  return out;
}

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const Eigen::Index g = grid.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(g);
  for (Eigen::Index j = 0; j + 1 < g; ++j) {
    const double h = 0.5 * (grid[j + 1] - grid[j]);
    w[j] += h;
    w[j + 1] += h;
  }
  return w;
}

namespace {

double weighted_entropy(const Eigen::VectorXd& density, const Eigen::VectorXd& weights) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < density.size(); ++j) {
    const double f = density[j];
    if (f > 1e-300) acc -= weights[j] * f * std::log(f);
  }
  return acc;
}

}  // namespace

MiEstimate mixture_mutual_information(const Eigen::MatrixXd& densities,
                                      const Eigen::VectorXd& weights) {
  const Eigen::Index nd = densities.rows();
  if (nd < 1) throw std::invalid_argument("mixture_mutual_information: no draws");
  if (densities.cols() != weights.size()) {
    throw std::invalid_argument("mixture_mutual_information: weight size mismatch");
  }
  MiEstimate est;
  Eigen::VectorXd per_draw(nd);
#pragma omp parallel for schedule(static)
  for (Eigen::Index d = 0; d < nd; ++d) {
    per_draw[d] = weighted_entropy(densities.row(d).transpose(), weights);
  }
  const Eigen::VectorXd mix = densities.colwise().mean().transpose();
  est.mean_entropy = per_draw.mean();
  est.total_entropy = weighted_entropy(mix, weights);
  est.mi = est.total_entropy - est.mean_entropy;
  if (nd < 2) return est;

  // Jackknife over draws.
  Eigen::VectorXd jk_total(nd), jk_mean(nd), jk_mi(nd);
  const double d_count = static_cast<double>(nd);
#pragma omp parallel for schedule(static)
  for (Eigen::Index d = 0; d < nd; ++d) {
    const Eigen::VectorXd mix_wo =
        (d_count * mix - densities.row(d).transpose()) / (d_count - 1.0);
    jk_total[d] = weighted_entropy(mix_wo, weights);
    jk_mean[d] = (per_draw.sum() - per_draw[d]) / (d_count - 1.0);
    jk_mi[d] = jk_total[d] - jk_mean[d];
  }
  auto jackknife_se = [&](const Eigen::VectorXd& reps) {
    const double m = reps.mean();
    return std::sqrt((d_count - 1.0) / d_count * (reps.array() - m).square().sum());
  };
  est.se_total = jackknife_se(jk_total);
  est.se_mean = jackknife_se(jk_mean);
  est.se_mi = jackknife_se(jk_mi);
  return est;
}

EntropyRow entropy_decompose(const PredictiveDistribution& dist) {
  const MiEstimate est =
      mixture_mutual_information(dist.pdf, trapezoid_weights(dist.y_grid));
  EntropyRow row;
  row.total_entropy = est.total_entropy;
  row.aleatoric = est.mean_entropy;
  row.epistemic = est.mi;
  row.se_total = est.se_total;
  row.se_aleatoric = est.se_mean;
  row.se_epistemic = est.se_mi;
  row.density_warning = dist.density_warning;
  return row;
}

EpistemicSplit epistemic_split(const PredictiveDistribution& full,
                               const PredictiveDistribution& no_calibration,
                               const PredictiveDistribution& weights_only) {
  if (full.n_draws() == 0 || no_calibration.n_draws() == 0 || weights_only.n_draws() == 0) {
    throw std::invalid_argument("epistemic_split: empty draw set");
  }
  const MiEstimate a = mixture_mutual_information(full.pdf, trapezoid_weights(full.y_grid));
  const MiEstimate b = mixture_mutual_information(no_calibration.pdf,
                                                  trapezoid_weights(no_calibration.y_grid));
  const MiEstimate c = mixture_mutual_information(weights_only.pdf,
                                                  trapezoid_weights(weights_only.y_grid));
  EpistemicSplit split;
  split.parametric = c.mi;
  split.structural_delta = b.mi - c.mi;
  split.structural_g = a.mi - b.mi;
  split.se_parametric = c.se_mi;
  split.se_structural_delta = std::hypot(b.se_mi, c.se_mi);
  split.se_structural_g = std::hypot(a.se_mi, b.se_mi);
  return split;
}

namespace {

struct MeanVarStats {
  double var_of_means = 0.0;
  double mean_of_vars = 0.0;
  double se_var_of_means = 0.0;
  double se_mean_of_vars = 0.0;
};

MeanVarStats mean_var_stats(const PredictiveDistribution& dist) {
  const Eigen::Index nd = dist.n_draws();
  Eigen::VectorXd means(nd), vars(nd);
  for (Eigen::Index d = 0; d < nd; ++d) {
    means[d] = predictive_mean(dist, d);
    vars[d] = variance_from_cdf(dist.cdf.row(d).transpose(), dist.y_grid, means[d]);
  }
  MeanVarStats stats;
  stats.mean_of_vars = vars.mean();
  const double mbar = means.mean();
  stats.var_of_means = nd > 1 ? (means.array() - mbar).square().sum() / (nd - 1) : 0.0;
  if (nd > 1) {
    const double dc = static_cast<double>(nd);
    Eigen::VectorXd jk_v(nd), jk_m(nd);
    for (Eigen::Index d = 0; d < nd; ++d) {
      const double sum = means.sum() - means[d];
      const double mean_wo = sum / (dc - 1.0);
      double ss = 0.0;
      for (Eigen::Index e = 0; e < nd; ++e) {
        if (e == d) continue;
        ss += (means[e] - mean_wo) * (means[e] - mean_wo);
      }
      jk_v[d] = nd > 2 ? ss / (dc - 2.0) : 0.0;
      jk_m[d] = (vars.sum() - vars[d]) / (dc - 1.0);
    }
    auto jackknife_se = [&](const Eigen::VectorXd& reps) {
      const double m = reps.mean();
      return std::sqrt((dc - 1.0) / dc * (reps.array() - m).square().sum());
    };
    stats.se_var_of_means = jackknife_se(jk_v);
    stats.se_mean_of_vars = jackknife_se(jk_m);
  }
  return stats;
}

}  // namespace

VarianceSplit variance_decompose(const PredictiveDistribution& full,
                                 const PredictiveDistribution& no_calibration,
                                 const PredictiveDistribution& weights_only) {
  if (full.n_draws() == 0 || no_calibration.n_draws() == 0 || weights_only.n_draws() == 0) {
    throw std::invalid_argument("variance_decompose: empty draw set");
  }
  const MeanVarStats a = mean_var_stats(full);
  const MeanVarStats b = mean_var_stats(no_calibration);
  const MeanVarStats c = mean_var_stats(weights_only);
  VarianceSplit split;
  split.aleatoric = a.mean_of_vars;
  split.parametric = c.var_of_means;
  split.structural_delta = b.var_of_means - c.var_of_means;
  split.structural_g = a.var_of_means - b.var_of_means;
  split.total = a.var_of_means + a.mean_of_vars;
  split.se_aleatoric = a.se_mean_of_vars;
  split.se_parametric = c.se_var_of_means;
  split.se_structural_delta = std::hypot(b.se_var_of_means, c.se_var_of_means);
  split.se_structural_g = std::hypot(a.se_var_of_means, b.se_var_of_means);
  return split;
}

Interval predictive_interval(const PredictiveDistribution& dist, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("predictive_interval: q in (0, 1)");
  const Eigen::VectorXd mean_cdf = dist.mean_cdf();
  const double lo_level = 0.5 * (1.0 - q);
  const double hi_level = 0.5 * (1.0 + q);

  auto invert = [&](double level, bool* clamped) {
    if (level <= mean_cdf[0]) {
      *clamped = *clamped || level < mean_cdf[0];
      return dist.y_grid[0];
    }
    const Eigen::Index g = mean_cdf.size();
    if (level >= mean_cdf[g - 1]) {
      *clamped = *clamped || level > mean_cdf[g - 1];
      return dist.y_grid[g - 1];
    }
    Eigen::Index lo = 0, hi = g - 1;
    while (hi - lo > 1) {
      const Eigen::Index mid = (lo + hi) / 2;
      if (mean_cdf[mid] <= level) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double span = mean_cdf[hi] - mean_cdf[lo];
    const double w = span > 0.0 ? (level - mean_cdf[lo]) / span : 0.0;
    return (1.0 - w) * dist.y_grid[lo] + w * dist.y_grid[hi];
  };

  Interval iv;
  iv.lo = invert(lo_level, &iv.clamped);
  iv.hi = invert(hi_level, &iv.clamped);
  return iv;
}

}  // namespace bne
