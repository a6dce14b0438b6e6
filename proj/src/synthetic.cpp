#include "bne/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "bne/math_special.hpp"
#include "bne/rng.hpp"

namespace bne {

namespace {
constexpr double kMixMeans[3] = {-4.0, 0.0, 4.0};
constexpr double kMixSds[3] = {0.4, 1.0, 0.4};

double det_mean(double x) { return 7.0 * std::sin(x); }
double noise_scale(double x) { return 3.0 * std::cos(0.5 * x); }
}  // namespace

double SyntheticSpec::alpha(double x) const {
  if (alpha_const > 0.0) return alpha_const;
  return 3.0 * std::exp(-std::fabs(x) / alpha_scale);
}

void SyntheticSpec::validate() const {
  if (n < 1) throw std::invalid_argument("SyntheticSpec: n must be >= 1");
  if (!(alpha_scale > 0.0)) throw std::invalid_argument("SyntheticSpec: alpha_scale must be > 0");
  if (alpha_const < 0.0) throw std::invalid_argument("SyntheticSpec: alpha_const must be >= 0");
}

double TruthHandle::mean(double x) const {
  return det_mean(x) + noise_scale(x) * weibull_mean(spec_.alpha(x));
}

double TruthHandle::cdf(double y, double x) const {
  const double m = det_mean(x);
  const double s = noise_scale(x);
  const double a = spec_.alpha(x);
  if (s > 0.0) return weibull_cdf((y - m) / s, a);
  if (s < 0.0) return 1.0 - weibull_cdf((y - m) / s, a);
  return y >= m ? 1.0 : 0.0;
}

double TruthHandle::quantile(double q, double x) const {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("TruthHandle::quantile: q in (0,1)");
  const double m = det_mean(x);
  const double s = noise_scale(x);
  const double a = spec_.alpha(x);
  if (s == 0.0) return m;
  const double p = s > 0.0 ? q : 1.0 - q;
  const double eps = std::pow(-std::log1p(-p), 1.0 / a);
  return m + s * eps;
}

std::string TruthHandle::to_json() const {
  nlohmann::json j;
  j["process"] = "sin-weibull-mixture";
  j["n"] = spec_.n;
  j["seed"] = spec_.seed;
  j["alpha_scale"] = spec_.alpha_scale;
  j["alpha_const"] = spec_.alpha_const;
  return j.dump(2);
}

TruthHandle TruthHandle::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  SyntheticSpec spec;
  spec.n = j.value("n", 100);
  spec.seed = j.value("seed", 0ULL);
  spec.alpha_scale = j.value("alpha_scale", 1.0);
  spec.alpha_const = j.value("alpha_const", 0.0);
  return TruthHandle(spec);
}

SimulationResult simulate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset data;
  data.x.resize(spec.n, 1);
  data.y.resize(spec.n);
  data.base_preds.resize(spec.n, 0);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const std::uint64_t comp = rng.uniform_int(3);
    const double x = kMixMeans[comp] + kMixSds[comp] * rng.normal();
    const double eps = rng.weibull(spec.alpha(x));
    data.x(i, 0) = x;
    data.y[i] = det_mean(x) + noise_scale(x) * eps;
  }
  return SimulationResult{std::move(data), TruthHandle(spec)};
}

}  // namespace bne
