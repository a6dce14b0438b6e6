#pragma once

#include <Eigen/Dense>
#include <string>

namespace bne {

// Regression dataset: features (N x p), responses (N), and optionally the
// base-model prediction matrix (N x K, zero columns when absent).
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::MatrixXd base_preds;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index n_features() const { return x.cols(); }
  Eigen::Index n_models() const { return base_preds.cols(); }

  Dataset rows(const std::vector<Eigen::Index>& idx) const;
};

// CSV schema: header row with feature columns x1..xp, response y, and
// optional base predictions f1..fK. UTF-8, '.' decimal separator.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& data, const std::string& path);

}  // namespace bne
