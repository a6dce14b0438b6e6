#pragma once

#include <cstdint>
#include <vector>

#include "bne/dataset.hpp"
#include "bne/kernels.hpp"

namespace bne {

// Kernel ridge regression base learner. The length scale is selected by
// 5-fold cross validation over a fixed log grid when cv_length_scale is set.
struct BaseModelSpec {
  KernelSpec kernel;
  double ridge = 1e-3;
  bool cv_length_scale = true;
};

class KernelRidge {
 public:
  KernelRidge() = default;

  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const BaseModelSpec& spec,
           std::uint64_t seed);

  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict_many(const Eigen::MatrixXd& X) const;

  // Leave-one-out predictions at the training points via the hat-matrix
  // identity yhat_{-i} = (yhat_i - h_ii y_i) / (1 - h_ii).
  Eigen::VectorXd loo_predictions() const;

  const KernelSpec& kernel() const { return spec_.kernel; }
  const BaseModelSpec& spec() const { return spec_; }
  const Eigen::MatrixXd& train_x() const { return train_x_; }
  const Eigen::VectorXd& coef() const { return coef_; }

  // Rebuild a frozen predictor from persisted pieces (no refit; LOO data is
  // not restored).
  static KernelRidge restore(const BaseModelSpec& spec, Eigen::MatrixXd train_x,
                             Eigen::VectorXd coef);

 private:
  BaseModelSpec spec_;
  Eigen::MatrixXd train_x_;
  Eigen::VectorXd train_y_;
  Eigen::VectorXd coef_;
  Eigen::VectorXd hat_diag_;
  Eigen::VectorXd fitted_;
};

// Result of the two-half protocol: base models trained on one half, base
// predictions formed on the other half (the ensemble's training data).
struct BaseEnsemble {
  std::vector<KernelRidge> models;
  std::vector<Eigen::Index> base_rows;
  std::vector<Eigen::Index> ensemble_rows;
  Dataset ensemble_data;  // x, y of the held half plus base_preds columns

  Eigen::VectorXd predict_row(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd predict_many(const Eigen::MatrixXd& X) const;
};

// Default trio for the 1-D experiments: one periodic and two RBF learners.
std::vector<BaseModelSpec> default_base_specs();

BaseEnsemble fit_base_models(const Dataset& data, const std::vector<BaseModelSpec>& specs,
                             std::uint64_t seed, double split_fraction = 0.5);

}  // namespace bne
