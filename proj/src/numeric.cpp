#include "rankkd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rankkd/error.hpp"

namespace rankkd {

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw InputError("logit vector needs at least 2 channels, got " +
                     std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InputError("logit " + std::to_string(i) + " is not finite");
    }
  }
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw InputError("probability vector needs at least 2 channels");
  }
  double sum = 0.0;
  for (double p : values_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InputError("probability entry outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InputError("probabilities do not sum to 1");
  }
}

std::vector<double> softmax(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InputError("temperature must be positive and finite");
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> q(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    q[i] = std::exp((z[i] - zmax) / temperature);
    total += q[i];
  }
  for (double& v : q) v /= total;
  return q;
}

ProbVector softmax_with_temperature(const LogitVector& z, double temperature) {
  return ProbVector(softmax(z.values(), temperature));
}

NormalizedLogits zscore_normalize(std::span<const double> z, double eps) {
  if (!(eps > 0.0)) throw InputError("z-score eps must be positive");
  const auto n = static_cast<double>(z.size());
  NormalizedLogits out;
  out.eps = eps;
  out.values.assign(z.size(), 0.0);
  if (std::adjacent_find(z.begin(), z.end(), std::not_equal_to<>()) == z.end()) {
    out.mean = z.empty() ? 0.0 : z[0];
    return out;
  }
  out.mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : z) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / n);
  const double denom = out.stddev + eps;
  for (std::size_t i = 0; i < z.size(); ++i) out.values[i] = (z[i] - out.mean) / denom;
  return out;
}

NormalizedLogits zscore_normalize(const LogitVector& z, double eps) {
  return zscore_normalize(z.values(), eps);
}

std::vector<double> zscore_backward(std::span<const double> z, const NormalizedLogits& forward,
                                    std::span<const double> grad_normalized) {
  if (z.size() != grad_normalized.size() || z.size() != forward.values.size()) {
    throw ShapeError("zscore_backward: size mismatch");
  }
  const auto n = static_cast<double>(z.size());
  const double denom = forward.stddev + forward.eps;
  const double gmean =
      std::accumulate(grad_normalized.begin(), grad_normalized.end(), 0.0) / n;
  std::vector<double> grad(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) grad[j] = (grad_normalized[j] - gmean) / denom;
  if (forward.stddev > 0.0) {
    // Contribution through the population std.
    double gd = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) gd += grad_normalized[i] * (z[i] - forward.mean);
    const double coef = gd / (n * forward.stddev * denom * denom);
    for (std::size_t j = 0; j < z.size(); ++j) grad[j] -= coef * (z[j] - forward.mean);
  }
  return grad;
}

std::vector<double> finite_difference_gradient(const ScalarFn& f, std::span<const double> z,
                                               double h) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  std::vector<double> point(z.begin(), z.end());
  std::vector<double> grad(z.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("non-finite function value at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: size mismatch");
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

}  // namespace rankkd
