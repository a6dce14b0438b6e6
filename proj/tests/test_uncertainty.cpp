#include <doctest.h>

#include <cmath>
#include <random>

#include "bne/inference.hpp"
#include "bne/math_special.hpp"
#include "bne/reference.hpp"
#include "bne/rng.hpp"
#include "bne/uncertainty.hpp"

using namespace bne;

namespace {

// Distribution with externally supplied CDF rows (for quadrature oracles).
PredictiveDistribution gaussian_rows(const Eigen::VectorXd& means, double sd,
                                     const Eigen::VectorXd& grid) {
  PredictiveDistribution dist;
  dist.y_grid = grid;
  dist.cdf.resize(means.size(), grid.size());
  dist.sys_cdf.resize(means.size(), grid.size());
  dist.pdf.resize(means.size(), grid.size());
  for (Eigen::Index d = 0; d < means.size(); ++d) {
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
      const double r = (grid[j] - means[d]) / sd;
      dist.cdf(d, j) = normal_cdf(r);
      dist.sys_cdf(d, j) = normal_cdf(r);
      dist.pdf(d, j) = normal_pdf(r) / sd;
    }
  }
  return dist;
}

Dataset toy_dataset(int n, int k, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> norm;
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  d.base_preds.resize(n, k);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = -2.0 + 4.0 * i / std::max(n - 1, 1);
    for (int j = 0; j < k; ++j) d.base_preds(i, j) = std::sin(d.x(i, 0) + j) + 0.1 * j;
    d.y[i] = (k > 0 ? d.base_preds(i, 0) : 0.0) + 0.3 * norm(gen);
  }
  return d;
}

}  // namespace

TEST_CASE("predictive mean: Gaussian closed form via the indicator rule") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(2001, -8.0, 12.0);
  const PredictiveDistribution dist =
      gaussian_rows(Eigen::VectorXd::Constant(1, 2.0), 1.0, grid);
  CHECK(std::fabs(predictive_mean(dist, 0) - 2.0) < 1e-3);
}

TEST_CASE("predictive mean: point mass at the origin and translation") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(2001, -10.0, 10.0);
  PredictiveDistribution step;
  step.y_grid = grid;
  step.cdf.resize(1, grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) step.cdf(0, j) = grid[j] >= 0.0 ? 1.0 : 0.0;
  CHECK(std::fabs(predictive_mean(step, 0)) < 1e-2);

  // shifting F by +c shifts the mean by +c
  const double c = 1.5;
  const PredictiveDistribution base =
      gaussian_rows(Eigen::VectorXd::Constant(1, 0.3), 0.8, grid);
  PredictiveDistribution shifted = base;
  shifted.y_grid = grid.array() + c;
  const double m0 = predictive_mean(base, 0);
  const double m1 = predictive_mean(shifted, 0);
  CHECK(m1 - m0 == doctest::Approx(c).epsilon(1e-6));
}

TEST_CASE("mean decomposition sums to the predictive mean") {
  Dataset data = toy_dataset(10, 2, 21);
  Hyperparams hyper;
  hyper.sigma_eps = 0.5;
  ModelConfig mc;
  mc.m_anchor = 8;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  HmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_warmup = 150;
  cfg.n_samples = 60;
  cfg.seed = 9;
  const PosteriorDraws draws = sample_posterior(state, cfg);
  const Predictor pred(state, draws, 4);

  const Eigen::VectorXd x = data.x.row(4).transpose();
  const Eigen::VectorXd grid = pred.default_y_grid(x);
  const PredictiveDistribution dist = pred.predict(x, grid);
  const auto parts = mean_decomposition(pred, x, grid);
  REQUIRE(static_cast<Eigen::Index>(parts.size()) == dist.n_draws());
  for (Eigen::Index d = 0; d < dist.n_draws(); ++d) {
    const double total = parts[d].ensemble_term + parts[d].d_delta + parts[d].d_g;
    CHECK(std::fabs(total - predictive_mean(dist, d)) < 1e-3 * hyper.sigma_eps + 1e-6);
  }
}

TEST_CASE("mean decomposition: identity calibration zeroes the G part") {
  Dataset data = toy_dataset(8, 2, 22);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 6;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  PosteriorDraws draws;
  draws.draws.push_back(state.identity_draw());
  draws.chain = {0};
  draws.step = {0};
  const Predictor pred(state, draws);
  const auto parts = mean_decomposition(pred, data.x.row(3).transpose());
  CHECK(std::fabs(parts[0].d_g) < 1e-9);
  CHECK(std::fabs(parts[0].d_delta) < 1e-12);
}

TEST_CASE("bias exceedance: symmetry, unanimity, tie rule") {
  Eigen::VectorXd sym(4);
  sym << -1.0, 1.0, -2.0, 2.0;
  CHECK(bias_exceedance(sym) == doctest::Approx(0.5));
  Eigen::VectorXd pos(3);
  pos << 0.5, 1.0, 2.0;
  CHECK(bias_exceedance(pos) == doctest::Approx(1.0));
  Eigen::VectorXd ties(4);
  ties << -1.0, 0.0, 1.0, 2.0;
  CHECK(bias_exceedance(ties) == doctest::Approx(0.625));
  // antisymmetry through the tie rule
  CHECK(bias_exceedance(-ties) == doctest::Approx(1.0 - 0.625));
  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK_THROWS(bias_exceedance(one));
}

TEST_CASE("statistic bias: identity calibration gives zero for every statistic") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(1201, -6.0, 6.0);
  const PredictiveDistribution dist =
      gaussian_rows(Eigen::VectorXd::Constant(2, 0.4), 0.9, grid);
  for (auto stat : {Statistic::variance, Statistic::skewness, Statistic::kurtosis}) {
    const Eigen::VectorXd d = statistic_bias(dist, stat);
    CHECK(d.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("statistic bias: shifted calibration matches the two-CDF moment oracle") {
  // systematic N(0,1), calibrated N(c,1): D_G(variance) compares the two
  // variances (equal), D_G(mean-shift effect) shows through the mean change.
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(4001, -10.0, 10.0);
  PredictiveDistribution dist;
  dist.y_grid = grid;
  dist.cdf.resize(1, grid.size());
  dist.sys_cdf.resize(1, grid.size());
  dist.pdf.resize(1, grid.size());
  const double c = 0.7;
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    dist.sys_cdf(0, j) = normal_cdf(grid[j]);         // N(0, 1)
    dist.cdf(0, j) = normal_cdf(grid[j] - c);         // N(c, 1)
    dist.pdf(0, j) = normal_pdf(grid[j] - c);
  }
  // oracle: E_cal[s(y)] - E_sys[s(y)] with s'(y) weights, via direct grid
  // moments of the two CDFs (both Gaussian, variance 1): variance statistic
  // uses s(y) = (y - E_cal)^2: under the calibrated law it is 1, under the
  // systematic law 1 + c^2
  const Eigen::VectorXd d_var = statistic_bias(dist, Statistic::variance);
  CHECK(d_var[0] == doctest::Approx(1.0 - (1.0 + c * c)).epsilon(1e-3));

  // symmetric perturbation: skewness bias vanishes, kurtosis bias does not
  PredictiveDistribution wide;
  wide.y_grid = grid;
  wide.cdf.resize(1, grid.size());
  wide.sys_cdf.resize(1, grid.size());
  wide.pdf.resize(1, grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    wide.sys_cdf(0, j) = normal_cdf(grid[j]);
    wide.cdf(0, j) = normal_cdf(grid[j] / 1.5);  // wider symmetric law
    wide.pdf(0, j) = normal_pdf(grid[j] / 1.5) / 1.5;
  }
  CHECK(std::fabs(statistic_bias(wide, Statistic::skewness)[0]) < 1e-6);
  CHECK(std::fabs(statistic_bias(wide, Statistic::kurtosis)[0]) > 1e-3);
}

TEST_CASE("entropy decomposition: single draw has zero epistemic part") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -5.0, 5.0);
  const PredictiveDistribution dist =
      gaussian_rows(Eigen::VectorXd::Constant(1, 0.0), 1.0, grid);
  const EntropyRow row = entropy_decompose(dist);
  CHECK(std::fabs(row.epistemic) < 1e-9);
  // Gaussian entropy 0.5 log(2 pi e)
  CHECK(row.total_entropy == doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E)).epsilon(1e-4));

  // identical draws: same result
  const PredictiveDistribution dup =
      gaussian_rows(Eigen::VectorXd::Constant(3, 0.0), 1.0, grid);
  const EntropyRow row3 = entropy_decompose(dup);
  CHECK(std::fabs(row3.epistemic) < 1e-9);
}

TEST_CASE("entropy decomposition: two-component mixture vs Monte Carlo oracle") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(3001, -8.0, 12.0);
  Eigen::VectorXd means(2);
  means << 0.0, 4.0;
  const PredictiveDistribution dist = gaussian_rows(means, 1.0, grid);
  const EntropyRow row = entropy_decompose(dist);

  // brute-force Monte Carlo entropy of the equal mixture of N(0,1), N(4,1)
  Rng rng(31);
  const int n = 1000000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = (rng.uniform() < 0.5 ? 0.0 : 4.0) + rng.normal();
    const double f = 0.5 * (normal_pdf(y) + normal_pdf(y - 4.0));
    acc -= std::log(f);
  }
  const double oracle = acc / n;
  CHECK(std::fabs(row.total_entropy - oracle) < 3.0 * std::max(row.se_total, 2e-3));
  // identity: aleatoric + epistemic = total (exact by construction)
  CHECK(row.aleatoric + row.epistemic == doctest::Approx(row.total_entropy).epsilon(1e-12));
}

TEST_CASE("mixture MI estimator matches exact enumeration on a discrete toy") {
  // 2 parameter values x 3 outcomes
  Eigen::MatrixXd pmf(2, 3);
  pmf << 0.7, 0.2, 0.1,
         0.2, 0.3, 0.5;
  // exact conditional MI with equal parameter probabilities
  Eigen::VectorXd mix = pmf.colwise().mean().transpose();
  auto h = [](const Eigen::VectorXd& p) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] > 0) acc -= p[i] * std::log(p[i]);
    }
    return acc;
  };
  const double exact_mi = h(mix) - 0.5 * (h(pmf.row(0).transpose()) + h(pmf.row(1).transpose()));

  // estimator input: posterior draws of the parameter, i.e. rows sampled
  // with equal probability
  Rng rng(17);
  const int n_draws = 4000;
  Eigen::MatrixXd rows(n_draws, 3);
  for (int d = 0; d < n_draws; ++d) rows.row(d) = pmf.row(rng.uniform_int(2));
  const MiEstimate est = mixture_mutual_information(rows, Eigen::VectorXd::Ones(3));
  CHECK(std::fabs(est.mi - exact_mi) < 3.0 * std::max(est.se_mi, 1e-4));

  // serial reference agrees
  const MiEstimate ref = serial::mixture_mutual_information(rows, Eigen::VectorXd::Ones(3));
  CHECK(est.mi == doctest::Approx(ref.mi).epsilon(1e-12));
}

TEST_CASE("epistemic split: identical sets give zero structural terms") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -6.0, 6.0);
  Eigen::VectorXd means(5);
  means << -0.5, 0.0, 0.2, 0.4, 1.0;
  const PredictiveDistribution dist = gaussian_rows(means, 1.0, grid);
  const EpistemicSplit split = epistemic_split(dist, dist, dist);
  CHECK(std::fabs(split.structural_g) < 1e-12);
  CHECK(std::fabs(split.structural_delta) < 1e-12);
  CHECK(split.parametric >= -3.0 * split.se_parametric);
  // telescoping: terms sum to MI(full)
  const MiEstimate full = mixture_mutual_information(dist.pdf, trapezoid_weights(grid));
  CHECK(split.structural_g + split.structural_delta + split.parametric ==
        doctest::Approx(full.mi).epsilon(1e-12));
}

TEST_CASE("epistemic split: single-draw weights-only set has zero parametric term") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(801, -6.0, 6.0);
  Eigen::VectorXd means(4);
  means << -0.3, 0.1, 0.5, 0.9;
  const PredictiveDistribution full = gaussian_rows(means, 1.0, grid);
  const PredictiveDistribution one =
      gaussian_rows(Eigen::VectorXd::Constant(1, 0.2), 1.0, grid);
  const EpistemicSplit split = epistemic_split(full, full, one);
  CHECK(split.parametric == doctest::Approx(0.0));
}

TEST_CASE("variance decomposition: degenerate reduced models give a two-term split") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(2001, -8.0, 8.0);
  Eigen::VectorXd means(6);
  means << -1.0, -0.5, 0.0, 0.3, 0.8, 1.4;
  const double sd = 0.7;
  const PredictiveDistribution full = gaussian_rows(means, sd, grid);
  const VarianceSplit split = variance_decompose(full, full, full);

  // oracle: direct two-term law of total variance
  const double mbar = means.mean();
  const double var_means = (means.array() - mbar).square().sum() / (means.size() - 1);
  CHECK(split.parametric == doctest::Approx(var_means).epsilon(1e-3));
  CHECK(split.aleatoric == doctest::Approx(sd * sd).epsilon(1e-3));
  CHECK(std::fabs(split.structural_g) < 1e-12);
  CHECK(std::fabs(split.structural_delta) < 1e-12);
  CHECK(split.total ==
        doctest::Approx(split.parametric + split.aleatoric + split.structural_g +
                        split.structural_delta)
            .epsilon(1e-12));

  // single draw per set: only the aleatoric term survives
  const PredictiveDistribution one =
      gaussian_rows(Eigen::VectorXd::Constant(1, 0.2), sd, grid);
  const VarianceSplit s1 = variance_decompose(one, one, one);
  CHECK(s1.parametric == 0.0);
  CHECK(s1.structural_g == 0.0);
  CHECK(s1.structural_delta == 0.0);
  CHECK(s1.aleatoric == doctest::Approx(sd * sd).epsilon(1e-3));
}

TEST_CASE("predictive interval: Gaussian quantile oracle and monotone width") {
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(4001, -6.0, 6.0);
  const PredictiveDistribution dist =
      gaussian_rows(Eigen::VectorXd::Constant(1, 0.0), 1.0, grid);
  const Interval iv = predictive_interval(dist, 0.9);
  CHECK(std::fabs(iv.lo + 1.6449) < 0.01);
  CHECK(std::fabs(iv.hi - 1.6449) < 0.01);
  CHECK_FALSE(iv.clamped);

  // widths widen with the level
  double prev = 0.0;
  for (double q : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const Interval i = predictive_interval(dist, q);
    CHECK(i.hi - i.lo >= prev);
    prev = i.hi - i.lo;
  }

  // extreme level spans nearly the full grid and clamps
  const Interval wide = predictive_interval(dist, 0.999999999);
  CHECK(wide.lo == doctest::Approx(grid[0]));
  CHECK(wide.hi == doctest::Approx(grid[grid.size() - 1]));

  // translation: adding a constant shifts both endpoints
  PredictiveDistribution shifted = dist;
  shifted.y_grid = grid.array() + 2.0;
  const Interval ivs = predictive_interval(shifted, 0.9);
  CHECK(ivs.lo - iv.lo == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(ivs.hi - iv.hi == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("predictor rows match the serial reference implementation") {
  Dataset data = toy_dataset(8, 2, 23);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 6;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  std::mt19937 gen(24);
  std::normal_distribution<double> norm;
  PosteriorDraws draws;
  for (int d = 0; d < 5; ++d) {
    Eigen::VectorXd xi(state.whitened_size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = 0.4 * norm(gen);
    draws.draws.push_back(state.unwhiten(xi));
    draws.chain.push_back(0);
    draws.step.push_back(d);
  }
  const Predictor pred(state, draws);
  const Eigen::VectorXd x = data.x.row(2).transpose();
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(50, -3.0, 3.0);
  const PredictiveDistribution fast = pred.predict(x, grid);
  const PredictiveDistribution ref = serial::predict(state, draws, x, grid);
  // the fast path interpolates per-draw slope profiles over a fine quantile
  // grid; agreement with the direct serial route is limited by that
  // interpolation
  CHECK((fast.cdf - ref.cdf).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((fast.sys_cdf - ref.sys_cdf).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fast.pdf - ref.pdf).cwiseAbs().maxCoeff() < 1e-2);

  // monotone rows
  for (Eigen::Index d = 0; d < fast.n_draws(); ++d) {
    for (Eigen::Index j = 1; j < grid.size(); ++j) {
      CHECK(fast.cdf(d, j) >= fast.cdf(d, j - 1));
    }
  }
}
