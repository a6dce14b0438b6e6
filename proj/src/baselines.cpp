#include "bne/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "bne/linalg.hpp"
#include "bne/math_special.hpp"
#include "bne/rng.hpp"

namespace bne {

namespace {

double gaussian_marginal_loglik(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                                double sigma_omega, double sigma_eps) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd S = sigma_omega * sigma_omega * (F * F.transpose());
  S.diagonal().array() += sigma_eps * sigma_eps;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double log_det =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * y.dot(llt.solve(y)) - 0.5 * log_det - 0.5 * n * kLog2Pi;
}

}  // namespace

PosteriorDraws fit_original_ensemble(const Dataset& data, Hyperparams hyper, int n_draws,
                                     std::uint64_t seed) {
  const Eigen::Index k = data.base_preds.cols();
  if (k == 0) throw std::invalid_argument("fit_original_ensemble: no base predictions (K = 0)");
  hyper.validate();
  const Eigen::MatrixXd& F = data.base_preds;

  if (data.size() > 0) {
    // Profile sigma_eps on the Gaussian marginal likelihood (golden section
    // on the log scale).
    const double sd_y = std::sqrt((data.y.array() - data.y.mean()).square().sum() /
                                  std::max<Eigen::Index>(data.size() - 1, 1));
    const double sy = sd_y > 0.0 ? sd_y : 1.0;
    double lo = std::log(0.02 * sy), hi = std::log(5.0 * sy);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    auto obj = [&](double lv) {
      return gaussian_marginal_loglik(F, data.y, hyper.sigma_omega, std::exp(lv));
    };
    double f1 = obj(x1), f2 = obj(x2);
    for (int it = 0; it < 40; ++it) {
      if (f1 < f2) {
        lo = x1; x1 = x2; f1 = f2;
        x2 = lo + gr * (hi - lo);
        f2 = obj(x2);
      } else {
        hi = x2; x2 = x1; f2 = f1;
        x1 = hi - gr * (hi - lo);
        f1 = obj(x1);
      }
    }
    hyper.sigma_eps = std::exp(f1 > f2 ? x1 : x2);
  }

  // Conjugate posterior: Sigma_n = (F'F/se^2 + I/so^2)^{-1}, m_n = Sigma_n F'y/se^2.
  const double se2 = hyper.sigma_eps * hyper.sigma_eps;
  const double so2 = hyper.sigma_omega * hyper.sigma_omega;
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(k, k) / so2;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  if (data.size() > 0) {
    prec += F.transpose() * F / se2;
    rhs = F.transpose() * data.y / se2;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("fit_original_ensemble: posterior precision not PD");
  }
  const Eigen::VectorXd mean = llt.solve(rhs);
  // Sample omega = mean + L^{-T} xi with prec = L L^T.
  const Eigen::MatrixXd L = llt.matrixL();

  PosteriorDraws out;
  Rng rng(seed);
  out.draws.reserve(n_draws);
  for (int d = 0; d < n_draws; ++d) {
    Eigen::VectorXd xi(k);
    for (Eigen::Index i = 0; i < k; ++i) xi[i] = rng.normal();
    ParamDraw draw;
    draw.omega = mean + L.transpose().triangularView<Eigen::Upper>().solve(xi);
    out.draws.push_back(std::move(draw));
    out.chain.push_back(0);
    out.step.push_back(d);
  }
  out.accept_rate = 1.0;  // exact sampler
  out.n_chains = 1;
  out.n_warmup = 0;
  out.seed = seed;
  out.model_kind = "original";
  out.hyper = hyper;
  return out;
}

PosteriorDraws fit_bae(const Dataset& data, const Hyperparams& hyper, const HmcConfig& cfg,
                       const ModelConfig& model_cfg) {
  const ModelState state(data, hyper, ModelKind::bae, model_cfg);
  return sample_posterior(state, cfg);
}

double StackingFit::mean(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (size_t k = 0; k < models.size(); ++k) acc += weights[k] * models[k].predict(x);
  return acc;
}

double StackingFit::cdf(const Eigen::VectorXd& x, double y) const {
  double acc = 0.0;
  for (size_t k = 0; k < models.size(); ++k) {
    acc += weights[k] * normal_cdf((y - models[k].predict(x)) / sigmas[k]);
  }
  return acc;
}

Interval StackingFit::interval(const Eigen::VectorXd& x, double level) const {
  Eigen::VectorXd preds(models.size());
  for (size_t k = 0; k < models.size(); ++k) preds[k] = models[k].predict(x);
  const double smax = sigmas.maxCoeff();
  double lo = preds.minCoeff() - 12.0 * smax;
  double hi = preds.maxCoeff() + 12.0 * smax;
  auto invert = [&](double p) {
    double a = lo, b = hi;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (a + b);
      if (cdf(x, mid) < p) {
        a = mid;
      } else {
        b = mid;
      }
    }
    return 0.5 * (a + b);
  };
  Interval iv;
  iv.lo = invert(0.5 * (1.0 - level));
  iv.hi = invert(0.5 * (1.0 + level));
  return iv;
}

namespace {

Eigen::VectorXd stacking_em(const Eigen::MatrixXd& q, int max_iters, bool* converged) {
  const Eigen::Index n = q.rows();
  const Eigen::Index k = q.cols();
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(k, 1.0 / k);
  *converged = false;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double denom = q.row(i).dot(pi);
      if (denom <= 0.0) continue;
      next += (q.row(i).transpose().cwiseProduct(pi)) / denom;
    }
    next /= static_cast<double>(n);
    next /= next.sum();
    const double delta = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (delta < 1e-12) {
      *converged = true;
      break;
    }
  }
  return pi;
}

}  // namespace

StackingFit fit_stacking_pretrained(const Dataset& ens_data, const BaseEnsemble& bases,
                                    int max_iters) {
  const Eigen::Index n = ens_data.size();
  const Eigen::Index k = ens_data.base_preds.cols();
  if (n < k + 1) throw std::invalid_argument("fit_stacking_pretrained: need N >= K + 1");
  StackingFit fit;
  fit.models = bases.models;
  fit.sigmas.resize(k);
  for (Eigen::Index m = 0; m < k; ++m) {
    const Eigen::VectorXd resid = ens_data.y - ens_data.base_preds.col(m);
    fit.sigmas[m] = std::max(
        std::sqrt(resid.squaredNorm() / std::max<Eigen::Index>(n - 1, 1)), 1e-8);
  }
  Eigen::MatrixXd q(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index m = 0; m < k; ++m) {
      const double r = (ens_data.y[i] - ens_data.base_preds(i, m)) / fit.sigmas[m];
      q(i, m) = std::max(normal_pdf(r) / fit.sigmas[m], 1e-300);
    }
  }
  fit.weights = stacking_em(q, max_iters, &fit.converged);
  return fit;
}

StackingFit fit_stacking(const Dataset& data, const std::vector<BaseModelSpec>& specs,
                         std::uint64_t seed, int max_iters) {
  const Eigen::Index n = data.size();
  const Eigen::Index k = static_cast<Eigen::Index>(specs.size());
  if (n < k + 1) throw std::invalid_argument("fit_stacking: need N >= K + 1");

  StackingFit fit;
  fit.models.resize(k);
  Eigen::MatrixXd loo(n, k);
  for (Eigen::Index m = 0; m < k; ++m) {
    fit.models[m].fit(data.x, data.y, specs[m], seed + 101 * (m + 1));
    loo.col(m) = fit.models[m].loo_predictions();
  }
  fit.sigmas.resize(k);
  for (Eigen::Index m = 0; m < k; ++m) {
    const Eigen::VectorXd resid = data.y - loo.col(m);
    const double var = resid.squaredNorm() / std::max<Eigen::Index>(n - 1, 1);
    fit.sigmas[m] = std::max(std::sqrt(var), 1e-8);
  }

  // Leave-one-out mixture densities.
  Eigen::MatrixXd q(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index m = 0; m < k; ++m) {
      const double r = (data.y[i] - loo(i, m)) / fit.sigmas[m];
      q(i, m) = std::max(normal_pdf(r) / fit.sigmas[m], 1e-300);
    }
  }

  fit.weights = stacking_em(q, max_iters, &fit.converged);
  return fit;
}

}  // namespace bne
