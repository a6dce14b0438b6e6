#include "bne/base_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bne/linalg.hpp"
#include "bne/rng.hpp"

namespace bne {

namespace {

Eigen::VectorXd cv_grid() {
  // log-spaced 0.1 .. 10, 13 points
  Eigen::VectorXd g(13);
  for (int i = 0; i < 13; ++i) g[i] = std::pow(10.0, -1.0 + 2.0 * i / 12.0);
  return g;
}

double cv_mse(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const BaseModelSpec& spec,
              double length_scale, const std::vector<Eigen::Index>& perm) {
  const Eigen::Index n = y.size();
  const int folds = std::min<Eigen::Index>(5, n);
  double sse = 0.0;
  Eigen::Index count = 0;
  BaseModelSpec s = spec;
  s.kernel.length_scale = length_scale;
  s.cv_length_scale = false;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train_idx, test_idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<int>(i) % folds == f) {
        test_idx.push_back(perm[i]);
      } else {
        train_idx.push_back(perm[i]);
      }
    }
    if (train_idx.empty() || test_idx.empty()) continue;
    Eigen::MatrixXd Xtr(train_idx.size(), X.cols());
    Eigen::VectorXd ytr(train_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i) {
      Xtr.row(i) = X.row(train_idx[i]);
      ytr[i] = y[train_idx[i]];
    }
    KernelRidge model;
    model.fit(Xtr, ytr, s, 0);
    for (Eigen::Index idx : test_idx) {
      const Eigen::VectorXd xq = X.row(idx).transpose();
      const double e = model.predict(xq) - y[idx];
      sse += e * e;
      ++count;
    }
  }
  return count > 0 ? sse / count : std::numeric_limits<double>::infinity();
}

}  // namespace

void KernelRidge::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const BaseModelSpec& spec, std::uint64_t seed) {
  if (X.rows() != y.size() || y.size() == 0) {
    throw std::invalid_argument("KernelRidge::fit: bad shapes");
  }
  if (!(spec.ridge > 0.0)) throw std::invalid_argument("KernelRidge::fit: ridge must be > 0");
  spec_ = spec;
  if (spec.cv_length_scale && y.size() >= 10) {
    Rng rng(seed);
    std::vector<Eigen::Index> perm(y.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (Eigen::Index i = y.size() - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    }
    const Eigen::VectorXd grid = cv_grid();
    double best = std::numeric_limits<double>::infinity();
    double best_l = spec.kernel.length_scale;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      const double mse = cv_mse(X, y, spec, grid[g], perm);
      if (mse < best) {
        best = mse;
        best_l = grid[g];
      }
    }
    spec_.kernel.length_scale = best_l;
  }
  spec_.cv_length_scale = false;
  train_x_ = X;
  train_y_ = y;
  Eigen::MatrixXd K = gram_matrix(spec_.kernel, X);
  Eigen::MatrixXd A = K;
  A.diagonal().array() += spec_.ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    A.diagonal().array() += 1e-8 * (K.trace() / K.rows());
    llt.compute(A);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("KernelRidge::fit: singular system after jitter");
    }
  }
  coef_ = llt.solve(y);
  const Eigen::MatrixXd H = K * llt.solve(Eigen::MatrixXd::Identity(K.rows(), K.cols()));
  hat_diag_ = H.diagonal();
  fitted_ = K * coef_;
}

double KernelRidge::predict(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < train_x_.rows(); ++i) {
    acc += coef_[i] * kernel_eval_dist(spec_.kernel, (train_x_.row(i).transpose() - x).norm());
  }
  return acc;
}

Eigen::VectorXd KernelRidge::predict_many(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xq = X.row(i).transpose();
    out[i] = predict(xq);
  }
  return out;
}

Eigen::VectorXd KernelRidge::loo_predictions() const {
  if (train_y_.size() == 0) {
    throw std::runtime_error("KernelRidge::loo_predictions: not available on a restored model");
  }
  Eigen::VectorXd out(train_y_.size());
  for (Eigen::Index i = 0; i < train_y_.size(); ++i) {
    const double h = std::min(hat_diag_[i], 1.0 - 1e-10);
    out[i] = (fitted_[i] - h * train_y_[i]) / (1.0 - h);
  }
  return out;
}

KernelRidge KernelRidge::restore(const BaseModelSpec& spec, Eigen::MatrixXd train_x,
                                 Eigen::VectorXd coef) {
  KernelRidge model;
  model.spec_ = spec;
  model.spec_.cv_length_scale = false;
  model.train_x_ = std::move(train_x);
  model.coef_ = std::move(coef);
  return model;
}

Eigen::VectorXd BaseEnsemble::predict_row(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(models.size());
  for (size_t k = 0; k < models.size(); ++k) out[k] = models[k].predict(x);
  return out;
}

Eigen::MatrixXd BaseEnsemble::predict_many(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out(X.rows(), models.size());
  for (size_t k = 0; k < models.size(); ++k) out.col(k) = models[k].predict_many(X);
  return out;
}

std::vector<BaseModelSpec> default_base_specs() {
  std::vector<BaseModelSpec> specs(3);
  specs[0].kernel.family = KernelFamily::periodic;
  specs[0].kernel.period = 2.0 * M_PI;
  specs[0].kernel.length_scale = 1.0;
  specs[1].kernel.family = KernelFamily::rbf;
  specs[2].kernel.family = KernelFamily::rbf;
  specs[2].ridge = 1.0;  // heavier smoothing, deliberately distinct
  return specs;
}

BaseEnsemble fit_base_models(const Dataset& data, const std::vector<BaseModelSpec>& specs,
                             std::uint64_t seed, double split_fraction) {
  if (specs.size() < 2) throw std::invalid_argument("fit_base_models: need >= 2 specs");
  const Eigen::Index n = data.size();
  const Eigen::Index n_base = static_cast<Eigen::Index>(std::llround(split_fraction * n));
  if (n_base < 5 || n - n_base < 5) {
    throw std::invalid_argument("fit_base_models: split leaves < 5 points per side");
  }
  Rng rng(seed);
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

  BaseEnsemble out;
  out.base_rows.assign(perm.begin(), perm.begin() + n_base);
  out.ensemble_rows.assign(perm.begin() + n_base, perm.end());
  std::sort(out.base_rows.begin(), out.base_rows.end());
  std::sort(out.ensemble_rows.begin(), out.ensemble_rows.end());

  const Dataset base_half = data.rows(out.base_rows);
  out.models.resize(specs.size());
  for (size_t k = 0; k < specs.size(); ++k) {
    out.models[k].fit(base_half.x, base_half.y, specs[k], seed + 101 * (k + 1));
  }
  out.ensemble_data = data.rows(out.ensemble_rows);
  out.ensemble_data.base_preds = out.predict_many(out.ensemble_data.x);
  return out;
}

}  // namespace bne
