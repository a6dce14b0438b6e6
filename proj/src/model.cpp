#include "bne/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bne/math_special.hpp"
#include "bne/rng.hpp"

namespace bne {

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::bne: return "bne";
    case ModelKind::bae: return "bae";
    case ModelKind::original: return "original";
  }
  return "unknown";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "bne") return ModelKind::bne;
  if (name == "bae") return ModelKind::bae;
  if (name == "original") return ModelKind::original;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

Eigen::VectorXd ParamDraw::pack() const {
  Eigen::VectorXd v(packed_size());
  Eigen::Index at = 0;
  v.segment(at, omega.size()) = omega; at += omega.size();
  v.segment(at, delta.size()) = delta; at += delta.size();
  v.segment(at, F_latent.size()) = F_latent; at += F_latent.size();
  v.segment(at, f_latent.size()) = f_latent;
  return v;
}

ParamDraw ParamDraw::unpack(const Eigen::VectorXd& v, Eigen::Index k, Eigen::Index n,
                            Eigen::Index m) {
  if (v.size() != k + n + 2 * m) throw std::invalid_argument("ParamDraw::unpack: size mismatch");
  ParamDraw d;
  Eigen::Index at = 0;
  d.omega = v.segment(at, k); at += k;
  d.delta = v.segment(at, n); at += n;
  d.F_latent = v.segment(at, m); at += m;
  d.f_latent = v.segment(at, m);
  return d;
}

ModelState::ModelState(Dataset data, Hyperparams hyper, ModelKind kind, ModelConfig cfg)
    : data_(std::move(data)), hyper_(hyper), kind_(kind), cfg_(cfg) {
  hyper_.validate();
  const Eigen::Index n = data_.size();

  kernel_delta_.family = KernelFamily::matern32;
  kernel_delta_.length_scale = hyper_.l_delta;

  if (n > 0) {
    y_mean_ = data_.y.mean();
    const double var =
        (data_.y.array() - y_mean_).square().sum() / std::max<Eigen::Index>(n - 1, 1);
    y_sd_ = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  // Standardized, downweighted input axes of the calibration embedding: the
  // quantile axis must dominate nearest-anchor distances so the derivative
  // latents control the whole map.
  constexpr double kInputAxisWeight = 0.6;
  x_mean_ = Eigen::VectorXd::Zero(data_.x.cols());
  x_sd_ = Eigen::VectorXd::Ones(data_.x.cols());
  if (n > 1) {
    for (Eigen::Index c = 0; c < data_.x.cols(); ++c) {
      x_mean_[c] = data_.x.col(c).mean();
      const double v = (data_.x.col(c).array() - x_mean_[c]).square().sum() / (n - 1);
      if (v > 0.0) x_sd_[c] = std::sqrt(v) / kInputAxisWeight;
    }
  }
  // The length-scale hyperparameter (and its prior band) lives on the raw
  // response scale; the kernel operates on the standardized embedding. The
  // calibration map uses the smooth RBF kernel: its derivative field stays
  // coherent between anchors, so the nonnegativity constraints at the
  // anchors control the whole map. A Matern-3/2 derivative field is too
  // rough for that, which lets the value surface dip between anchors.
  kernel_g_.family = KernelFamily::rbf;
  kernel_g_.length_scale = hyper_.l_G / y_sd_;

  if (has_delta()) {
    const Eigen::MatrixXd K_delta = gram_matrix(kernel_delta_, data_.x);
    auto [proj, K_orth] = orthogonalize_tolerant(K_delta, data_.base_preds);
    P_delta_ = proj.P;
    chol_delta_ = CholFactor(K_orth);
    // Query-side correction for conditioning the orthogonalized process at
    // new inputs: the removed basis must be subtracted as functions of the
    // query (universal-kriging residual), not only on the anchor side, or
    // predictions reconstruct basis-span content.
    if (data_.base_preds.cols() > 0) {
      const Eigen::MatrixXd pinv =
          Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(data_.base_preds)
              .pseudoInverse();
      delta_corr_ = P_delta_ * K_delta * pinv.transpose();
    }
  }

  if (kind_ == ModelKind::bne && n > 0 && cfg_.m_anchor > 0) {
    const Eigen::Index m = cfg_.m_anchor;
    // Product layout: equispaced quantile levels replicated at a few input
    // centers (training inputs at uniform empirical quantiles). Columns of
    // levels at a shared input keep neighbouring levels strongly coupled so
    // the value surface follows the derivative latents; separate columns let
    // the map adapt across the input space.
    const Eigen::Index centers = m >= 30 ? 5 : (m >= 15 ? 3 : 1);
    const Eigen::Index levels = m / centers;
    if (levels * centers != m) {
      throw std::invalid_argument(
          "ModelState: m_anchor must be divisible by the column count (5 when >= 30, 3 when >= 15)");
    }
    u_levels_.resize(m);
    t_anchor_.resize(m);

    std::vector<Eigen::Index> order(n);
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [this](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index c = 0; c < data_.x.cols(); ++c) {
        if (data_.x(a, c) != data_.x(b, c)) return data_.x(a, c) < data_.x(b, c);
      }
      return data_.y[a] < data_.y[b];
    });

    x_anchor_.resize(m, data_.x.cols());
    for (Eigen::Index c = 0; c < centers; ++c) {
      const Eigen::Index pos = static_cast<Eigen::Index>(
          std::llround((c + 0.5) / static_cast<double>(centers) * (n - 1)));
      for (Eigen::Index l = 0; l < levels; ++l) {
        const Eigen::Index j = c * levels + l;
        u_levels_[j] = (static_cast<double>(l) + 0.5) / static_cast<double>(levels);
        // The quantile level enters the embedding linearly, with the slope
        // matched to the standard normal density at the median. A linear
        // placement keeps the prior scale of the derivative latents uniform
        // across levels.
        t_anchor_[j] = kSqrt2Pi * (u_levels_[j] - 0.5);
        x_anchor_.row(j) = data_.x.row(order[pos]);
      }
    }

    z_anchor_.resize(m, 1 + data_.x.cols());
    z_anchor_.col(0) = t_anchor_;
    for (Eigen::Index j = 0; j < m; ++j) {
      z_anchor_.row(j).tail(data_.x.cols()) =
          ((x_anchor_.row(j).transpose() - x_mean_).array() / x_sd_.array()).transpose();
    }
    const GramBlocks blocks = derivative_kernels(kernel_g_, z_anchor_, 0);

    // Derivative latents live on the quantile scale (the identity map has
    // derivative one): f = 1 + psi' * d(residual)/d z1, psi' = sqrt(2 pi).
    Eigen::MatrixXd C(2 * m, 2 * m);
    C.topLeftCorner(m, m) = blocks.K;
    C.topRightCorner(m, m) = kSqrt2Pi * blocks.K_d;
    C.bottomLeftCorner(m, m) = C.topRightCorner(m, m).transpose();
    C.bottomRightCorner(m, m) = kSqrt2Pi * kSqrt2Pi * blocks.K_dd;

    eta_mean_.resize(2 * m);
    eta_mean_.head(m) = u_levels_;
    eta_mean_.tail(m).setOnes();

    // The latent prior is orthogonalized against its mean function (the
    // identity map evaluated at the anchors) for identifiability.
    auto [proj, C_orth] = orthogonalize_tolerant(C, eta_mean_);
    P_G_ = proj.P;
    chol_G_ = CholFactor(C_orth);

    // Boundary pins: G(0) = 0 and G(1) = 1 are mathematical facts of a CDF
    // map, enforced as fixed zero-residual value observations at each anchor
    // column. They enter the conditioning operator (pinning the predictive
    // tails, disciplining the total slope mass, and fixing the offset/scale
    // of the value surface) but are not sampled.
    const Eigen::Index nb = 2 * centers;
    z_bound_.resize(nb, 1 + data_.x.cols());
    Eigen::VectorXd u_bound(nb);
    for (Eigen::Index c = 0; c < centers; ++c) {
      for (int side = 0; side < 2; ++side) {
        const Eigen::Index b = 2 * c + side;
        u_bound[b] = side == 0 ? 0.0 : 1.0;
        z_bound_(b, 0) = kSqrt2Pi * (u_bound[b] - 0.5);
        z_bound_.row(b).tail(data_.x.cols()) = z_anchor_.row(c * levels).tail(data_.x.cols());
      }
    }
    const Eigen::Index ext = 2 * m + nb;
    Eigen::MatrixXd C_ab(2 * m, nb);
    Eigen::MatrixXd C_bb(nb, nb);
    for (Eigen::Index b = 0; b < nb; ++b) {
      const Eigen::VectorXd zb = z_bound_.row(b).transpose();
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::VectorXd za = z_anchor_.row(j).transpose();
        C_ab(j, b) = kernel_eval_dist(kernel_g_, (za - zb).norm());
        C_ab(m + j, b) = kSqrt2Pi * kernel_d1(kernel_g_, za, zb, 0);
      }
      for (Eigen::Index b2 = 0; b2 < nb; ++b2) {
        C_bb(b, b2) =
            kernel_eval_dist(kernel_g_, (z_bound_.row(b) - z_bound_.row(b2)).norm());
      }
    }
    Eigen::MatrixXd M_cond(ext, ext);
    M_cond.topLeftCorner(2 * m, 2 * m) = C_orth;
    M_cond.topRightCorner(2 * m, nb) = P_G_ * C_ab;
    M_cond.bottomLeftCorner(nb, 2 * m) = M_cond.topRightCorner(2 * m, nb).transpose();
    M_cond.bottomRightCorner(nb, nb) = C_bb;
    M_cond = 0.5 * (M_cond + M_cond.transpose()).eval();
    // Nugget: conditioning honors the latents to about one percent. An
    // (almost) exact solve of the smooth-kernel covariance amplifies its
    // numerically unresolved modes into high-frequency swings between the
    // anchors.
    M_cond.diagonal().array() += 1e-4 * M_cond.trace() / ext;
    filt_G_ = SpectralSolve(M_cond);
    P_ext_ = Eigen::MatrixXd::Identity(ext, ext);
    P_ext_.topLeftCorner(2 * m, 2 * m) = P_G_;
  }
}

Eigen::VectorXd ModelState::z_of_u(const Eigen::VectorXd& x, double u) const {
  Eigen::VectorXd z(1 + x.size());
  z[0] = kSqrt2Pi * (u - 0.5);
  z.tail(x.size()) = (x - x_mean_).array() / x_sd_.array();
  return z;
}

Eigen::VectorXd ModelState::val_cross_row(const Eigen::VectorXd& x, double u) const {
  const Eigen::Index m = n_anchor();
  const Eigen::Index nb = z_bound_.rows();
  const Eigen::VectorXd z = z_of_u(x, u);
  Eigen::VectorXd raw(2 * m + nb);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::VectorXd za = z_anchor_.row(j).transpose();
    raw[j] = kernel_eval_dist(kernel_g_, (z - za).norm());
    raw[m + j] = kSqrt2Pi * kernel_d2(kernel_g_, z, za, 0);
  }
  for (Eigen::Index b = 0; b < nb; ++b) {
    raw[2 * m + b] = kernel_eval_dist(kernel_g_, (z - z_bound_.row(b).transpose()).norm());
  }
  return P_ext_ * raw;
}

Eigen::VectorXd ModelState::der_cross_row(const Eigen::VectorXd& x, double u) const {
  const Eigen::Index m = n_anchor();
  const Eigen::Index nb = z_bound_.rows();
  const Eigen::VectorXd z = z_of_u(x, u);
  Eigen::VectorXd raw(2 * m + nb);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::VectorXd za = z_anchor_.row(j).transpose();
    raw[j] = kernel_d1(kernel_g_, z, za, 0);
    raw[m + j] = kSqrt2Pi * kernel_d1d2(kernel_g_, z, za, 0);
  }
  for (Eigen::Index b = 0; b < nb; ++b) {
    raw[2 * m + b] = kernel_d1(kernel_g_, z, z_bound_.row(b).transpose(), 0);
  }
  return P_ext_ * raw;
}

Eigen::VectorXd ModelState::der2_cross_row(const Eigen::VectorXd& x, double u) const {
  const Eigen::Index m = n_anchor();
  const Eigen::Index nb = z_bound_.rows();
  const Eigen::VectorXd z = z_of_u(x, u);
  Eigen::VectorXd raw(2 * m + nb);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::VectorXd za = z_anchor_.row(j).transpose();
    raw[j] = kernel_d1d1(kernel_g_, z, za, 0);
    raw[m + j] = kSqrt2Pi * kernel_d1d1d2(kernel_g_, z, za, 0);
  }
  for (Eigen::Index b = 0; b < nb; ++b) {
    raw[2 * m + b] = kernel_d1d1(kernel_g_, z, z_bound_.row(b).transpose(), 0);
  }
  return P_ext_ * raw;
}

Eigen::VectorXd ModelState::calib_weights(const ParamDraw& draw) const {
  Eigen::VectorXd resid = Eigen::VectorXd::Zero(2 * n_anchor() + z_bound_.rows());
  resid.head(n_anchor()) = draw.F_latent - eta_mean_.head(n_anchor());
  resid.segment(n_anchor(), n_anchor()) = draw.f_latent - eta_mean_.tail(n_anchor());
  return filt_G_.solve(resid);
}

Eigen::VectorXd ModelState::solve_calibration(const Eigen::VectorXd& rhs) const {
  return filt_G_.solve(rhs);
}

Eigen::VectorXd ModelState::base_at(const Eigen::VectorXd& x) const {
  if (base_predictor_) return base_predictor_(x);
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    if ((data_.x.row(i).transpose() - x).norm() < 1e-12) {
      return data_.base_preds.row(i).transpose();
    }
  }
  throw std::runtime_error(
      "ModelState::base_at: no base predictor set and x is not a training input");
}

ParamDraw ModelState::identity_draw() const {
  ParamDraw d;
  d.omega = Eigen::VectorXd::Zero(n_weights());
  d.delta = Eigen::VectorXd::Zero(has_delta() ? n() : 0);
  if (has_calibration()) {
    d.F_latent = u_levels_;
    d.f_latent = Eigen::VectorXd::Ones(n_anchor());
  } else {
    d.F_latent.resize(0);
    d.f_latent.resize(0);
  }
  return d;
}

ModelState::DrawCache ModelState::make_cache(const ParamDraw& draw) const {
  DrawCache cache;
  if (draw.omega.size() != n_weights()) {
    throw std::invalid_argument("make_cache: omega size mismatch");
  }
  cache.omega = draw.omega;
  cache.mu = data_.base_preds * draw.omega;
  if (has_delta()) {
    if (draw.delta.size() != n()) throw std::invalid_argument("make_cache: delta size mismatch");
    cache.delta = draw.delta;
    cache.mu += draw.delta;
    cache.m_delta = chol_delta_.solve(draw.delta);
    cache.v_delta = P_delta_ * cache.m_delta;
  }
  if (has_calibration()) {
    if (draw.F_latent.size() != n_anchor() || draw.f_latent.size() != n_anchor()) {
      throw std::invalid_argument("make_cache: latent size mismatch");
    }
    cache.w = calib_weights(draw);
  }
  return cache;
}

double ModelState::delta_at(const DrawCache& cache, const Eigen::VectorXd& x) const {
  if (!has_delta() || cache.v_delta.size() == 0) return 0.0;
  // At a training input the residual value is observed directly.
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (data_.x.row(i).transpose() == x) return cache.delta[i];
  }
  Eigen::VectorXd cross(n());
  for (Eigen::Index i = 0; i < n(); ++i) {
    cross[i] = kernel_eval_dist(kernel_delta_, (data_.x.row(i).transpose() - x).norm());
  }
  if (delta_corr_.cols() > 0) {
    // subtract the base-prediction basis evaluated at the query, tapered by
    // the strongest training-point correlation so far inputs fall back to
    // the prior mean
    const double taper = cross.maxCoeff() / kernel_delta_.amplitude;
    return cross.dot(cache.v_delta) - taper * (delta_corr_ * base_at(x)).dot(cache.m_delta);
  }
  return cross.dot(cache.v_delta);
}

double ModelState::mu_at(const DrawCache& cache, const Eigen::VectorXd& x) const {
  return base_at(x).dot(cache.omega) + delta_at(cache, x);
}

double ModelState::systematic_cdf(const DrawCache& cache, const Eigen::VectorXd& x,
                                  double y) const {
  const double mu = mu_at(cache, x);
  return normal_cdf((y - mu) / hyper_.sigma_eps);
}

double ModelState::calibrated_cdf(const DrawCache& cache, const Eigen::VectorXd& x,
                                  double y) const {
  const double u = systematic_cdf(cache, x, y);
  if (!has_calibration()) return u;
  // The map is reconstructed from its slope field: G(u) is the normalized
  // integral of the conditioned slope (floored at zero). This yields a
  // proper CDF map (monotone, G(0) = 0, G(1) = 1) driven by the surface the
  // likelihood actually constrains.
  const int nodes = 257;
  const double step = 1.0 / (nodes - 1);
  double total = 0.0;
  double at_u = 0.0;
  double prev = std::max(1.0 + kSqrt2Pi * der_cross_row(x, 0.0).dot(cache.w), 0.0);
  for (int k = 1; k < nodes; ++k) {
    const double uk = k * step;
    const double cur = std::max(1.0 + kSqrt2Pi * der_cross_row(x, uk).dot(cache.w), 0.0);
    const double cell = 0.5 * (prev + cur) * step;
    const double lo = uk - step;
    if (u >= uk) {
      at_u += cell;
    } else if (u > lo) {
      const double w_in = (u - lo) / step;
      const double g_u = (1.0 - w_in) * prev + w_in * cur;
      at_u += 0.5 * (prev + g_u) * (u - lo);
    }
    total += cell;
    prev = cur;
  }
  if (total <= 0.0) return u;
  return std::min(1.0, std::max(0.0, at_u / total));
}

double ModelState::model_pdf(const DrawCache& cache, const Eigen::VectorXd& x, double y) const {
  const double mu = mu_at(cache, x);
  const double r = (y - mu) / hyper_.sigma_eps;
  const double f_s = normal_pdf(r) / hyper_.sigma_eps;
  double pdf = f_s;
  if (has_calibration()) {
    const double u = normal_cdf(r);
    pdf = f_s * (1.0 + kSqrt2Pi * der_cross_row(x, u).dot(cache.w));
  }
  return std::max(pdf, pdf_floor());
}

double ModelState::systematic_cdf(const ParamDraw& draw, const Eigen::VectorXd& x,
                                  double y) const {
  return systematic_cdf(make_cache(draw), x, y);
}

double ModelState::calibrated_cdf(const ParamDraw& draw, const Eigen::VectorXd& x,
                                  double y) const {
  return calibrated_cdf(make_cache(draw), x, y);
}

double ModelState::model_pdf(const ParamDraw& draw, const Eigen::VectorXd& x, double y) const {
  return model_pdf(make_cache(draw), x, y);
}

namespace {

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    throw std::runtime_error(std::string("log_posterior: non-finite term '") + term + "'");
  }
}

}  // namespace

ParamDraw ModelState::zero_like() const {
  ParamDraw d;
  d.omega = Eigen::VectorXd::Zero(n_weights());
  d.delta = Eigen::VectorXd::Zero(has_delta() ? n() : 0);
  d.F_latent = Eigen::VectorXd::Zero(has_calibration() ? n_anchor() : 0);
  d.f_latent = Eigen::VectorXd::Zero(has_calibration() ? n_anchor() : 0);
  return d;
}

double ModelState::data_loglik_grad(const ParamDraw& draw, ParamDraw* grad) const {
  const Eigen::Index N = n();
  const Eigen::Index M = n_anchor();
  const double sig = hyper_.sigma_eps;
  const bool calib = has_calibration();

  Eigen::VectorXd mu = data_.base_preds * draw.omega;
  if (has_delta()) mu += draw.delta;

  Eigen::VectorXd w;
  if (calib) w = calib_weights(draw);

  // Per-point contributions stored first so the reductions are serial and
  // deterministic.
  Eigen::VectorXd logpdf(N), gmu(N);
  Eigen::MatrixXd der_over_g;
  if (calib && grad != nullptr) der_over_g.resize(N, 2 * M + z_bound_.rows());

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < N; ++i) {
    const double r = (data_.y[i] - mu[i]) / sig;
    const double f_s = normal_pdf(r) / sig;
    if (calib) {
      const double u = normal_cdf(r);
      const Eigen::VectorXd x = data_.x.row(i).transpose();
      const Eigen::VectorXd der_row = der_cross_row(x, u);
      const double g = 1.0 + kSqrt2Pi * der_row.dot(w);
      const double pdf = f_s * g;
      if (pdf > pdf_floor()) {
        logpdf[i] = std::log(pdf);
        if (grad != nullptr) {
          // d logpdf / d mu = r/sig + (c f_s / g) * d(der_row . w)/d z1 * c
          // with d z1/d mu = -c f_s folded in below
          const double der2 = der2_cross_row(x, u).dot(w);
          gmu[i] = r / sig - kSqrt2Pi * kSqrt2Pi * f_s * der2 / g;
          der_over_g.row(i) = der_row.transpose() / g;
        }
      } else {
        logpdf[i] = std::log(pdf_floor());
        if (grad != nullptr) {
          gmu[i] = 0.0;
          der_over_g.row(i).setZero();
        }
      }
    } else {
      const double pdf = std::max(f_s, pdf_floor());
      logpdf[i] = std::log(pdf);
      if (grad != nullptr) gmu[i] = f_s > pdf_floor() ? r / sig : 0.0;
    }
  }

  double loglik = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) loglik += logpdf[i];
  check_finite(loglik, "likelihood");

  double constraint = 0.0;
  if (calib) {
    constraint = constraint_loglik(draw, hyper_.sigma_c);
    check_finite(constraint, "constraint");
  }

  if (grad != nullptr) {
    grad->omega += data_.base_preds.transpose() * gmu;
    if (has_delta()) grad->delta += gmu;
    if (calib) {
      Eigen::VectorXd g_eta =
          kSqrt2Pi * filt_G_.solve(der_over_g.colwise().sum().transpose().eval());
      g_eta.conservativeResize(2 * M);
      for (Eigen::Index j = 0; j < M; ++j) {
        g_eta[j] += (normal_log_cdf_grad(draw.F_latent[j] / hyper_.sigma_c)
                     - normal_log_cdf_grad((1.0 - draw.F_latent[j]) / hyper_.sigma_c))
                    / hyper_.sigma_c;
        g_eta[M + j] += normal_log_cdf_grad(draw.f_latent[j] / hyper_.sigma_c) / hyper_.sigma_c;
      }
      grad->F_latent += g_eta.head(M);
      grad->f_latent += g_eta.tail(M);
    }
  }
  return loglik + constraint;
}

double ModelState::log_prior_grad(const ParamDraw& draw, ParamDraw* grad) const {
  const Eigen::Index N = n();
  const Eigen::Index K = n_weights();
  const Eigen::Index M = n_anchor();

  double prior_omega = -0.5 * draw.omega.squaredNorm() / (hyper_.sigma_omega * hyper_.sigma_omega)
                       - K * std::log(hyper_.sigma_omega) - 0.5 * K * kLog2Pi;
  check_finite(prior_omega, "omega prior");
  if (grad != nullptr) {
    grad->omega -= draw.omega / (hyper_.sigma_omega * hyper_.sigma_omega);
  }

  double prior_delta = 0.0;
  if (has_delta()) {
    const Eigen::VectorXd s_delta = chol_delta_.solve(draw.delta);
    prior_delta = -0.5 * draw.delta.dot(s_delta) - 0.5 * chol_delta_.log_det()
                  - 0.5 * N * kLog2Pi;
    check_finite(prior_delta, "delta prior");
    if (grad != nullptr) grad->delta -= s_delta;
  }

  double prior_eta = 0.0;
  if (has_calibration()) {
    Eigen::VectorXd eta(2 * M);
    eta.head(M) = draw.F_latent;
    eta.tail(M) = draw.f_latent;
    const Eigen::VectorXd w = chol_G_.solve((eta - eta_mean_).eval());
    prior_eta = -0.5 * (eta - eta_mean_).dot(w) - 0.5 * chol_G_.log_det() - M * kLog2Pi;
    check_finite(prior_eta, "calibration prior");
    if (grad != nullptr) {
      grad->F_latent -= w.head(M);
      grad->f_latent -= w.tail(M);
    }
  }
  return prior_omega + prior_delta + prior_eta;
}

double ModelState::log_posterior(const ParamDraw& draw) const {
  return log_posterior_grad(draw, nullptr);
}

double ModelState::log_posterior_grad(const ParamDraw& draw, ParamDraw* grad) const {
  if (grad != nullptr) *grad = zero_like();
  const double loglik = data_loglik_grad(draw, grad);
  const double prior = log_prior_grad(draw, grad);
  const double total = loglik + prior;
  check_finite(total, "total");
  return total;
}

Eigen::Index ModelState::whitened_size() const {
  Eigen::Index s = n_weights();
  if (has_delta()) s += n();
  if (has_calibration()) s += 2 * n_anchor();
  return s;
}

Eigen::VectorXd ModelState::whiten(const ParamDraw& draw) const {
  Eigen::VectorXd xi(whitened_size());
  Eigen::Index at = 0;
  xi.segment(at, n_weights()) = draw.omega / hyper_.sigma_omega;
  at += n_weights();
  if (has_delta()) {
    xi.segment(at, n()) = chol_delta_.llt().matrixL().solve(draw.delta);
    at += n();
  }
  if (has_calibration()) {
    Eigen::VectorXd eta(2 * n_anchor());
    eta.head(n_anchor()) = draw.F_latent;
    eta.tail(n_anchor()) = draw.f_latent;
    xi.segment(at, 2 * n_anchor()) = chol_G_.llt().matrixL().solve((eta - eta_mean_).eval());
  }
  return xi;
}

ParamDraw ModelState::unwhiten(const Eigen::VectorXd& xi) const {
  if (xi.size() != whitened_size()) throw std::invalid_argument("unwhiten: size mismatch");
  ParamDraw d;
  Eigen::Index at = 0;
  d.omega = hyper_.sigma_omega * xi.segment(at, n_weights());
  at += n_weights();
  if (has_delta()) {
    d.delta = chol_delta_.llt().matrixL() * xi.segment(at, n());
    at += n();
  } else {
    d.delta.resize(0);
  }
  if (has_calibration()) {
    const Eigen::VectorXd eta =
        eta_mean_ + chol_G_.llt().matrixL() * xi.segment(at, 2 * n_anchor());
    d.F_latent = eta.head(n_anchor());
    d.f_latent = eta.tail(n_anchor());
  } else {
    d.F_latent.resize(0);
    d.f_latent.resize(0);
  }
  return d;
}

Eigen::VectorXd ModelState::whiten_grad(const ParamDraw& grad_theta) const {
  Eigen::VectorXd g(whitened_size());
  Eigen::Index at = 0;
  g.segment(at, n_weights()) = hyper_.sigma_omega * grad_theta.omega;
  at += n_weights();
  if (has_delta()) {
    g.segment(at, n()) = chol_delta_.llt().matrixL().transpose() * grad_theta.delta;
    at += n();
  }
  if (has_calibration()) {
    Eigen::VectorXd g_eta(2 * n_anchor());
    g_eta.head(n_anchor()) = grad_theta.F_latent;
    g_eta.tail(n_anchor()) = grad_theta.f_latent;
    g.segment(at, 2 * n_anchor()) = chol_G_.llt().matrixL().transpose() * g_eta;
  }
  return g;
}

Eigen::VectorXd ModelState::prior_sd_diag() const {
  Eigen::VectorXd out(n_weights() + (has_delta() ? n() : 0) +
                      (has_calibration() ? 2 * n_anchor() : 0));
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < n_weights(); ++i) out[at++] = hyper_.sigma_omega;
  if (has_delta()) {
    const Eigen::MatrixXd L = chol_delta_.llt().matrixL();
    for (Eigen::Index i = 0; i < n(); ++i) out[at++] = L.row(i).norm();
  }
  if (has_calibration()) {
    const Eigen::MatrixXd L = chol_G_.llt().matrixL();
    for (Eigen::Index i = 0; i < 2 * n_anchor(); ++i) out[at++] = L.row(i).norm();
  }
  return out;
}

double constraint_loglik(const ParamDraw& draw, double sigma_c) {
  if (!(sigma_c > 0.0)) throw std::invalid_argument("constraint_loglik: sigma_c must be > 0");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < draw.F_latent.size(); ++j) {
    acc += normal_log_cdf(draw.f_latent[j] / sigma_c);
    acc += normal_log_cdf(draw.F_latent[j] / sigma_c);
    acc += normal_log_cdf((1.0 - draw.F_latent[j]) / sigma_c);
  }
  return acc;
}

}  // namespace bne
