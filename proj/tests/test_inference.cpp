#include <doctest.h>

#include <cmath>
#include <random>

#include "bne/inference.hpp"
#include "bne/math_special.hpp"
#include "bne/reference.hpp"
#include "bne/rng.hpp"
#include "bne/synthetic.hpp"

using namespace bne;

namespace {

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

ParamDraw whitened_draw(const ModelState& state, unsigned seed, double scale = 0.3) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> norm;
  Eigen::VectorXd xi(state.whitened_size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = scale * norm(gen);
  return state.unwhiten(xi);
}

}  // namespace

TEST_CASE("hmc recovers standard normal moments") {
  const LogDensityGrad target = [](const Eigen::VectorXd& q, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = -q;
    return -0.5 * q.squaredNorm();
  };
  HmcConfig cfg;
  cfg.n_chains = 4;
  cfg.n_warmup = 500;
  cfg.n_samples = 1000;
  cfg.seed = 42;
  const HmcResult res = hmc_sample(target, Eigen::VectorXd::Zero(1), cfg);
  REQUIRE(res.draws.size() == 4000);
  double sum = 0.0, sumsq = 0.0;
  for (const auto& q : res.draws) {
    sum += q[0];
    sumsq += q[0] * q[0];
  }
  const double mean = sum / res.draws.size();
  const double var = sumsq / res.draws.size() - mean * mean;
  CHECK(std::fabs(mean) < 0.1);
  CHECK(var > 0.85);
  CHECK(var < 1.15);
  CHECK(res.accept_rate > 0.5);
}

TEST_CASE("hmc recovers a correlated Gaussian target") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 1.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const LogDensityGrad target = [&prec](const Eigen::VectorXd& q, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = -prec * q;
    return -0.5 * q.dot(prec * q);
  };
  HmcConfig cfg;
  cfg.n_chains = 4;
  cfg.n_warmup = 400;
  cfg.n_samples = 800;
  cfg.seed = 5;
  const HmcResult res = hmc_sample(target, Eigen::VectorXd::Zero(2), cfg);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (const auto& q : res.draws) {
    sx += q[0];
    sy += q[1];
    sxx += q[0] * q[0];
    syy += q[1] * q[1];
    sxy += q[0] * q[1];
  }
  const double n = static_cast<double>(res.draws.size());
  const double mx = sx / n, my = sy / n;
  const double corr = (sxy / n - mx * my) /
                      std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
  CHECK(corr > 0.7);
  CHECK(corr < 0.9);
}

TEST_CASE("hmc accepts every proposal on a flat target") {
  const LogDensityGrad target = [](const Eigen::VectorXd& q, Eigen::VectorXd* grad) {
    if (grad != nullptr) grad->setZero(q.size());
    return 0.0;
  };
  HmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_warmup = 50;
  cfg.n_samples = 100;
  cfg.seed = 3;
  const HmcResult res = hmc_sample(target, Eigen::VectorXd::Zero(1), cfg);
  CHECK(res.accept_rate == 1.0);
  CHECK(res.divergences == 0);
  // proposals move: momentum diffusion
  double spread = 0.0;
  for (const auto& q : res.draws) spread = std::max(spread, std::fabs(q[0]));
  CHECK(spread > 0.0);
}

TEST_CASE("hmc is bitwise reproducible for a fixed seed") {
  const LogDensityGrad target = [](const Eigen::VectorXd& q, Eigen::VectorXd* grad) {
    if (grad != nullptr) *grad = -q;
    return -0.5 * q.squaredNorm();
  };
  HmcConfig cfg;
  cfg.n_chains = 2;
  cfg.n_warmup = 100;
  cfg.n_samples = 200;
  cfg.seed = 77;
  const HmcResult a = hmc_sample(target, Eigen::VectorXd::Zero(3), cfg);
  const HmcResult b = hmc_sample(target, Eigen::VectorXd::Zero(3), cfg);
  REQUIRE(a.draws.size() == b.draws.size());
  for (size_t i = 0; i < a.draws.size(); ++i) {
    CHECK((a.draws[i] - b.draws[i]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(a.accept_rate == b.accept_rate);
}

TEST_CASE("hmc validates its config and init") {
  HmcConfig bad;
  bad.n_chains = 0;
  CHECK_THROWS(bad.validate());
  HmcConfig cfg;
  cfg.target_accept = 1.5;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("cvm grid default spans the data") {
  Eigen::VectorXd y(4);
  y << 0.0, 1.0, 2.0, 3.0;
  const CvmGrid grid = CvmGrid::default_for(y, 20);
  CHECK(grid.y_points.size() == 20);
  CHECK(grid.y_points[0] < 0.0);
  CHECK(grid.y_points[19] > 3.0);
  grid.validate();
}

TEST_CASE("cvm_empirical: half-half toy gives 0.25") {
  // CDF flat at one half everywhere: huge sigma_eps
  Dataset data;
  data.x.resize(1, 1);
  data.x << 0.0;
  data.y.resize(1);
  data.y << 0.0;
  data.base_preds.resize(1, 1);
  data.base_preds << 0.0;
  Hyperparams hyper;
  hyper.sigma_eps = 1e9;
  ModelConfig mc;
  mc.m_anchor = 0;
  const ModelState state(data, hyper, ModelKind::bae, mc);
  CvmGrid grid;
  grid.y_points.resize(4);
  grid.y_points << -2.0, -1.0, 1.0, 2.0;  // indicators 0, 0, 1, 1
  const double v = cvm_empirical(state, state.identity_draw(), grid, data);
  CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("cvm_empirical: near-perfect fit approaches zero") {
  Dataset data;
  data.x.resize(2, 1);
  data.x << -1.0, 1.0;
  data.y.resize(2);
  data.y << -0.5, 0.7;
  data.base_preds.resize(2, 1);
  data.base_preds << -0.5, 0.7;  // exact predictor
  Hyperparams hyper;
  hyper.sigma_eps = 1e-6;  // model cdf is a step at y_i
  ModelConfig mc;
  mc.m_anchor = 0;
  const ModelState state(data, hyper, ModelKind::bae, mc);
  ParamDraw draw = state.identity_draw();
  draw.omega << 1.0;
  CvmGrid grid;
  grid.y_points.resize(4);
  grid.y_points << -2.0, -0.6, 0.75, 2.0;
  CHECK(cvm_empirical(state, draw, grid, data) < 1e-12);
}

TEST_CASE("cvm_empirical: duplicated observation leaves the value unchanged") {
  Dataset one = toy_dataset(1, 1, 4);
  Dataset two;
  two.x.resize(2, 1);
  two.x << one.x(0, 0), one.x(0, 0);
  two.y.resize(2);
  two.y << one.y[0], one.y[0];
  two.base_preds.resize(2, 1);
  two.base_preds << one.base_preds(0, 0), one.base_preds(0, 0);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 0;
  const ModelState state(one, hyper, ModelKind::bae, mc);
  const CvmGrid grid = CvmGrid::default_for(one.y, 6);
  ParamDraw draw = state.identity_draw();
  draw.omega << 0.8;
  const double a = cvm_empirical(state, draw, grid, one);
  const double b = cvm_empirical(state, draw, grid, two);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
}

TEST_CASE("cvm matches the serial reference") {
  Dataset data = toy_dataset(8, 2, 5);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 6;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const ParamDraw draw = whitened_draw(state, 6);
  const CvmGrid grid = CvmGrid::default_for(data.y, 9);
  CHECK(cvm_empirical(state, draw, grid, data) ==
        doctest::Approx(serial::cvm_empirical(state, draw, grid, data)).epsilon(1e-12));
}

TEST_CASE("calibrated divergence composes its two brackets") {
  Dataset data = toy_dataset(5, 2, 7);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 4;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const ParamDraw draw = whitened_draw(state, 8);
  const CvmGrid grid = CvmGrid::default_for(data.y, 8);

  const auto cache = state.make_cache(draw);
  double nll = 0.0;
  for (int i = 0; i < 5; ++i) {
    nll -= std::log(state.model_pdf(cache, data.x.row(i).transpose(), data.y[i]));
  }
  nll /= 5.0;
  const double cvm = cvm_empirical(state, draw, grid, data);
  CHECK(calibrated_divergence(state, draw, grid, data, 0.0) ==
        doctest::Approx(nll).epsilon(1e-12));
  CHECK(calibrated_divergence(state, draw, grid, data, 1.0) ==
        doctest::Approx(nll + cvm).epsilon(1e-12));
  CHECK(calibrated_divergence(state, draw, grid, data, 3.5) ==
        doctest::Approx(nll + 3.5 * cvm).epsilon(1e-12));
}

TEST_CASE("calibrated log posterior reduces to log_posterior at lambda 0") {
  Dataset data = toy_dataset(6, 2, 9);
  Hyperparams hyper;
  hyper.lambda = 0.0;
  ModelConfig mc;
  mc.m_anchor = 5;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 10);
  double first_gap = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const ParamDraw draw = whitened_draw(state, 100 + rep);
    const double gap =
        calibrated_log_posterior(state, draw, grid, data) - state.log_posterior(draw);
    if (rep == 0) {
      first_gap = gap;
    } else {
      CHECK(std::fabs(gap - first_gap) < 1e-9);
    }
  }
  CHECK(std::fabs(first_gap) < 1e-9);
}

TEST_CASE("lambda penalizes a badly calibrated draw") {
  Dataset data = toy_dataset(6, 2, 10);
  Hyperparams hyper0, hyper10;
  hyper0.lambda = 0.0;
  hyper10.lambda = 10.0;
  ModelConfig mc;
  mc.m_anchor = 5;
  const ModelState s0(data, hyper0, ModelKind::bne, mc);
  const ModelState s10(data, hyper10, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 10);
  ParamDraw bad = s0.identity_draw();
  bad.omega.setConstant(3.0);  // badly off-center predictions
  const double v0 = calibrated_log_posterior(s0, bad, grid, data);
  const double v10 = calibrated_log_posterior(s10, bad, grid, data);
  CHECK(v10 < v0);
}

TEST_CASE("calibrated objective value and gradient match the plain assembly") {
  Dataset data = toy_dataset(5, 2, 11);
  Hyperparams hyper;
  hyper.lambda = 1.5;
  ModelConfig mc;
  mc.m_anchor = 4;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 7);
  const CalibratedObjective objective(state, grid);
  ParamDraw draw = whitened_draw(state, 12, 0.15);
  for (unsigned s = 13; draw.f_latent.minCoeff() < 0.3 && s < 40; ++s) {
    draw = whitened_draw(state, s, 0.15);
  }

  // value: log_posterior - N * lambda * penalty, with the penalty assembled
  // independently from the objective's clipped value-surface proxy
  const Eigen::VectorXd w = state.calib_weights(draw);
  const auto cache = state.make_cache(draw);
  double sq = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = data.x.row(i).transpose();
    for (Eigen::Index j = 0; j < grid.y_points.size(); ++j) {
      const double u = state.systematic_cdf(cache, x, grid.y_points[j]);
      const double raw = u + state.val_cross_row(x, u).dot(w);
      const double clipped = std::min(1.0, std::max(0.0, raw));
      const double ind = data.y[i] < grid.y_points[j] ? 1.0 : 0.0;
      sq += (clipped - ind) * (clipped - ind);
    }
  }
  const double proxy = sq / (5.0 * grid.y_points.size());
  const double expected = state.log_posterior(draw) - 5.0 * 1.5 * proxy;
  CHECK(objective.value_grad(draw, nullptr) == doctest::Approx(expected).epsilon(1e-9));

  // gradient vs finite differences (step sized for the stiff orthogonalized
  // latent directions)
  ParamDraw grad;
  objective.value_grad(draw, &grad);
  const Eigen::VectorXd g = grad.pack();
  const Eigen::VectorXd theta = draw.pack();
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fp = objective.value_grad(ParamDraw::unpack(tp, 2, 5, 4), nullptr);
    const double fm = objective.value_grad(ParamDraw::unpack(tm, 2, 5, 4), nullptr);
    const double fd = (fp - fm) / (2.0 * h);
    CHECK(std::fabs(g[i] - fd) <= std::max(1e-4, 1e-3 * std::fabs(g[i])));
  }
}

TEST_CASE("inverse-gamma hyperprior hits the 0.98 band") {
  const auto [a, b] = length_scale_invgamma_params();
  const double band = inv_gamma_cdf(10.0, a, b) - inv_gamma_cdf(2.0, a, b);
  CHECK(band >= 0.979);
  CHECK(band <= 0.981);
}

TEST_CASE("half-normal density at zero") {
  CHECK(log_halfnormal_pdf(0.0, 5.0) ==
        doctest::Approx(std::log(2.0 / (5.0 * std::sqrt(2.0 * M_PI)))).epsilon(1e-12));
  CHECK(log_halfnormal_pdf(-1.0, 5.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("empirical Bayes recovers a long GP length scale") {
  // data simulated from a Matern GP with l = 4, fitted l_delta in [2, 8]
  KernelSpec truth_kernel;
  truth_kernel.family = KernelFamily::matern32;
  truth_kernel.length_scale = 4.0;
  EbConfig cfg;
  cfg.sweeps = 2;
  cfg.golden_iters = 6;
  cfg.map_steps = 60;
  for (unsigned seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 1);
    const int n = 36;
    Eigen::MatrixXd X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = -6.0 + 12.0 * i / (n - 1.0);
    const Eigen::MatrixXd K = gram_matrix(truth_kernel, X);
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += 1e-8;
    const Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    Eigen::VectorXd xi(n);
    for (int i = 0; i < n; ++i) xi[i] = rng.normal();
    Dataset data;
    data.x = X;
    data.y = llt.matrixL() * xi;
    for (int i = 0; i < n; ++i) data.y[i] += 0.05 * rng.normal();
    data.base_preds.resize(n, 0);
    const EbResult eb = empirical_bayes_fit(data, ModelKind::bae, cfg);
    CHECK(eb.hyper.l_delta >= 2.0);
    CHECK(eb.hyper.l_delta <= 8.0);
  }
}

TEST_CASE("elbo: independent two-term assembly at lambda 0") {
  Dataset data = toy_dataset(4, 2, 13);
  Hyperparams hyper;
  hyper.lambda = 0.0;
  ModelConfig mc;
  mc.m_anchor = 3;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 6);
  VariationalState vstate = variational_init(state);
  vstate.mc_samples = 16;

  const double elbo = calibrated_elbo(state, vstate, grid, data, 99);

  // independent assembly: reparameterized expected negative log likelihood
  // with the same draw stream, plus the Gaussian KL computed densely
  const Eigen::Index K = state.n_weights(), N = state.n(), M = state.n_anchor();
  const Eigen::VectorXd sd = vstate.log_sd.array().exp();
  Rng rng(99);
  double nll = 0.0;
  for (int s = 0; s < vstate.mc_samples; ++s) {
    Eigen::VectorXd zeta(vstate.mean.size());
    for (Eigen::Index i = 0; i < zeta.size(); ++i) zeta[i] = rng.normal();
    const ParamDraw draw =
        ParamDraw::unpack(vstate.mean + sd.cwiseProduct(zeta), K, N, M);
    const auto cache = state.make_cache(draw);
    for (Eigen::Index i = 0; i < N; ++i) {
      nll -= std::log(state.model_pdf(cache, data.x.row(i).transpose(), data.y[i]));
    }
    nll -= constraint_loglik(draw, state.hyper().sigma_c);
  }
  nll /= vstate.mc_samples;

  // dense KL for the three Gaussian blocks
  auto block_kl = [&](const Eigen::MatrixXd& prior_cov, const Eigen::VectorXd& prior_mean,
                      Eigen::Index offset, Eigen::Index len) {
    const Eigen::MatrixXd S = sd.segment(offset, len).array().square().matrix().asDiagonal();
    const Eigen::VectorXd d = vstate.mean.segment(offset, len) - prior_mean;
    const Eigen::LLT<Eigen::MatrixXd> llt(prior_cov);
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(len, len));
    const double logdet_p =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    double logdet_q = 0.0;
    for (Eigen::Index i = 0; i < len; ++i) {
      logdet_q += 2.0 * vstate.log_sd[offset + i];
    }
    return 0.5 * ((inv * S).trace() + d.dot(inv * d) - len + logdet_p - logdet_q);
  };
  double kl = block_kl(Eigen::MatrixXd::Identity(K, K) * hyper.sigma_omega * hyper.sigma_omega,
                       Eigen::VectorXd::Zero(K), 0, K);
  {
    const Eigen::MatrixXd L = state.delta_factor().llt().matrixL();
    kl += block_kl(L * L.transpose(), Eigen::VectorXd::Zero(N), K, N);
  }
  {
    const Eigen::MatrixXd L = state.calibration_factor().llt().matrixL();
    kl += block_kl(L * L.transpose(), state.eta_mean(), K + N, 2 * M);
  }
  CHECK(elbo == doctest::Approx(nll + kl).epsilon(1e-6));
}

TEST_CASE("elbo: q equal to the prior on an empty dataset has zero KL") {
  Dataset empty;
  empty.x.resize(0, 1);
  empty.y.resize(0);
  empty.base_preds.resize(0, 3);
  Hyperparams hyper;
  hyper.sigma_omega = 1.7;
  const ModelState state(empty, hyper, ModelKind::bne);
  VariationalState vstate = variational_init(state);
  vstate.log_sd.setConstant(std::log(1.7));
  const CvmGrid grid{Eigen::VectorXd::LinSpaced(4, -1.0, 1.0)};
  CHECK(calibrated_elbo(state, vstate, grid, empty, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("elbo agrees with a brute-force Monte Carlo estimate") {
  Dataset data = toy_dataset(3, 1, 14);
  Hyperparams hyper;
  hyper.lambda = 1.0;
  ModelConfig mc;
  mc.m_anchor = 3;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 5);
  VariationalState vstate = variational_init(state);
  vstate.log_sd.setConstant(std::log(0.05));
  vstate.mc_samples = 1024;
  const double estimate = calibrated_elbo(state, vstate, grid, data, 7);

  // brute force with 10^5 samples and its standard error
  const Eigen::Index K = 1, N = 3, M = 3;
  const Eigen::VectorXd sd = vstate.log_sd.array().exp();
  Rng rng(1234);
  const int big = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int s = 0; s < big; ++s) {
    Eigen::VectorXd zeta(vstate.mean.size());
    for (Eigen::Index i = 0; i < zeta.size(); ++i) zeta[i] = rng.normal();
    const ParamDraw draw =
        ParamDraw::unpack(vstate.mean + sd.cwiseProduct(zeta), K, N, M);
    const auto cache = state.make_cache(draw);
    double term = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      term -= std::log(state.model_pdf(cache, data.x.row(i).transpose(), data.y[i]));
    }
    term += N * hyper.lambda * cvm_empirical(state, draw, grid, data);
    sum += term;
    sumsq += term * term;
  }
  const double mc_mean = sum / big;
  const double mc_se = std::sqrt((sumsq / big - mc_mean * mc_mean) / big);

  // The KL bracket plus the expected constraint term is deterministic given
  // the seed: evaluate it alone through the library with an empty dataset
  // (same draw stream, so the constraint expectation cancels exactly),
  // leaving the data bracket to compare against the brute-force mean within
  // 2 standard errors (dominated by the 1024-sample estimate's own error).
  Dataset empty;
  empty.x.resize(0, 1);
  empty.y.resize(0);
  empty.base_preds.resize(0, 1);
  const double kl_part = calibrated_elbo(state, vstate, grid, empty, 7);
  const double se_small = mc_se * std::sqrt(static_cast<double>(big) / 1024.0);
  CHECK(std::fabs((estimate - kl_part) - mc_mean) < 2.0 * (mc_se + se_small));
}

TEST_CASE("cvi: lr = 0 leaves the state unchanged bitwise") {
  Dataset data = toy_dataset(4, 2, 15);
  Hyperparams hyper;
  ModelConfig mc;
  mc.m_anchor = 3;
  const ModelState state(data, hyper, ModelKind::bne, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 5);
  VariationalState vstate = variational_init(state);
  const Eigen::VectorXd mean0 = vstate.mean;
  const Eigen::VectorXd ls0 = vstate.log_sd;
  const VariationalState out = cvi_optimize(state, vstate, grid, data, 20, 0.0, 3);
  CHECK((out.mean - mean0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out.log_sd - ls0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.elbo_trace.size() == 20);
}

TEST_CASE("cvi descends on a conjugate Gaussian toy and finds its mean") {
  // weights-only model: exact posterior is Gaussian with a known mean
  Dataset data = toy_dataset(30, 1, 16);
  Hyperparams hyper;
  hyper.sigma_eps = 0.3;
  hyper.sigma_omega = 2.0;
  ModelConfig mc;
  mc.m_anchor = 0;
  const ModelState state(data, hyper, ModelKind::original, mc);
  const CvmGrid grid = CvmGrid::default_for(data.y, 5);
  VariationalState vstate = variational_init(state);
  vstate.mean.setZero();
  const VariationalState out = cvi_optimize(state, vstate, grid, data, 400, 0.02, 11);

  // smoothed trace is nonincreasing
  const auto& tr = out.elbo_trace;
  REQUIRE(tr.size() == 400);
  double prev = std::numeric_limits<double>::infinity();
  double lo = *std::min_element(tr.begin(), tr.end());
  double hi = *std::max_element(tr.begin(), tr.end());
  const double slack = 0.02 * (hi - lo);
  for (size_t w = 0; w + 20 <= tr.size(); w += 20) {
    double m = 0.0;
    for (size_t i = w; i < w + 20; ++i) m += tr[i];
    m /= 20.0;
    CHECK(m <= prev + slack);
    prev = m;
  }

  // conjugate posterior mean oracle
  const Eigen::MatrixXd& F = data.base_preds;
  const double se2 = hyper.sigma_eps * hyper.sigma_eps;
  const double so2 = hyper.sigma_omega * hyper.sigma_omega;
  const Eigen::MatrixXd prec =
      F.transpose() * F / se2 + Eigen::MatrixXd::Identity(1, 1) / so2;
  const Eigen::VectorXd post_mean = prec.inverse() * F.transpose() * data.y / se2;
  CHECK(std::fabs(out.mean[0] - post_mean[0]) < 0.05);
}
