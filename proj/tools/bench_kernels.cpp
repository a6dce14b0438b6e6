// Wall-time comparison of the OpenMP-parallel kernels against their serial
// reference implementations: gram matrices, log-likelihood sums, predictive
// grid fills, CvM double sums, and the mixture mutual-information estimator.

#include <chrono>
#include <cstdio>
#include <random>

#include <omp.h>

#include "bne/inference.hpp"
#include "bne/predictive.hpp"
#include "bne/reference.hpp"
#include "bne/uncertainty.hpp"

using namespace bne;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_seconds();
    fn();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %.2fx\n", name,
              1e3 * serial_s, 1e3 * parallel_s, serial_s / parallel_s);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::mt19937 gen(1);
  std::normal_distribution<double> norm;

  // gram matrix, 600 points in 3-D
  {
    Eigen::MatrixXd Z(600, 3);
    for (int i = 0; i < Z.size(); ++i) Z(i / 3, i % 3) = norm(gen);
    KernelSpec spec;
    spec.length_scale = 1.5;
    volatile double sink = 0.0;
    const double ts = time_best_of(3, [&] { sink += serial::gram_matrix(spec, Z)(0, 1); });
    const double tp = time_best_of(3, [&] { sink += gram_matrix(spec, Z)(0, 1); });
    (void)sink;
    report("gram_matrix 600x600", ts, tp);
  }

  // model pieces on a mid-size fit
  Dataset data;
  {
    const int n = 400;
    data.x.resize(n, 1);
    data.y.resize(n);
    data.base_preds.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      data.x(i, 0) = -4.0 + 8.0 * i / (n - 1.0);
      for (int k = 0; k < 3; ++k) data.base_preds(i, k) = std::sin(data.x(i, 0) + k);
      data.y[i] = data.base_preds(i, 0) + 0.3 * norm(gen);
    }
  }
  Hyperparams hyper;
  const ModelState state(data, hyper, ModelKind::bne);
  std::vector<ParamDraw> draws;
  PosteriorDraws draw_set;
  for (int d = 0; d < 64; ++d) {
    Eigen::VectorXd xi(state.whitened_size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = 0.3 * norm(gen);
    draw_set.draws.push_back(state.unwhiten(xi));
    draw_set.chain.push_back(0);
    draw_set.step.push_back(d);
  }

  {
    volatile double sink = 0.0;
    const double ts =
        time_best_of(3, [&] { sink += serial::data_loglik(state, draw_set.draws[0]); });
    const double tp =
        time_best_of(3, [&] { sink += state.data_loglik_grad(draw_set.draws[0], nullptr); });
    (void)sink;
    report("data log-likelihood n=400", ts, tp);
  }

  {
    const CvmGrid grid = CvmGrid::default_for(data.y, 20);
    volatile double sink = 0.0;
    const double ts = time_best_of(
        3, [&] { sink += serial::cvm_empirical(state, draw_set.draws[0], grid, data); });
    const double tp =
        time_best_of(3, [&] { sink += cvm_empirical(state, draw_set.draws[0], grid, data); });
    (void)sink;
    report("cvm double sum 400x20", ts, tp);
  }

  {
    const Predictor pred(state, draw_set);
    const Eigen::VectorXd x = data.x.row(200).transpose();
    const Eigen::VectorXd grid = pred.default_y_grid(x);
    volatile double sink = 0.0;
    const double ts =
        time_best_of(3, [&] { sink += serial::predict(state, draw_set, x, grid).cdf(0, 0); });
    const double tp = time_best_of(3, [&] { sink += pred.predict(x, grid).cdf(0, 0); });
    (void)sink;
    report("predictive rows 64x801", ts, tp);
  }

  {
    const Predictor pred(state, draw_set);
    const Eigen::VectorXd x = data.x.row(100).transpose();
    const PredictiveDistribution dist = pred.predict(x);
    const Eigen::VectorXd w = trapezoid_weights(dist.y_grid);
    volatile double sink = 0.0;
    const double ts = time_best_of(
        3, [&] { sink += serial::mixture_mutual_information(dist.pdf, w).mi; });
    const double tp =
        time_best_of(3, [&] { sink += mixture_mutual_information(dist.pdf, w).mi; });
    (void)sink;
    report("mixture MI 64 draws", ts, tp);
  }

  return 0;
}
