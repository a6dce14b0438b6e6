#pragma once

#include "bne/inference.hpp"
#include "bne/model.hpp"
#include "bne/uncertainty.hpp"

// Serial reference implementations of the OpenMP-parallel kernels. They use
// plain loops and, where possible, an independent evaluation route (per-query
// kernel evaluation instead of precomputed cross matrices), and serve as
// oracles in the tests and as the baseline in the kernel benchmark.

namespace bne::serial {

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& Z);

GramBlocks derivative_kernels(const KernelSpec& spec, const Eigen::MatrixXd& Z, int axis = 0);

// Sum of log model PDFs over the training data plus the constraint term,
// evaluated pointwise through the public per-query path.
double data_loglik(const ModelState& state, const ParamDraw& draw);

double cvm_empirical(const ModelState& state, const ParamDraw& draw, const CvmGrid& grid,
                     const Dataset& data);

MiEstimate mixture_mutual_information(const Eigen::MatrixXd& densities,
                                      const Eigen::VectorXd& weights);

PredictiveDistribution predict(const ModelState& state, const PosteriorDraws& draws,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& y_grid);

}  // namespace bne::serial
