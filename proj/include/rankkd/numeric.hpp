#pragma once

// Elementary numeric types shared by the loss, network and harness code.
// All reals are double.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rankkd {

/// Raw pre-softmax scores, one per channel. Always finite, at least two channels.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values);
  LogitVector(std::initializer_list<double> values) : LogitVector(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

/// A distribution over channels: entries in [0, 1] summing to 1 within 1e-9.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

/// Z-scored logits: zero mean, unit population std (or all zeros for constant input).
struct NormalizedLogits {
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // population std of the input
  double eps = 0.0;
};

inline constexpr double kDefaultZscoreEps = 1e-6;

/// q_i = exp(z_i/T) / sum_j exp(z_j/T), evaluated with max-subtraction.
ProbVector softmax_with_temperature(const LogitVector& z, double temperature);

/// Same as above on a raw span; used on hot paths that already hold validated data.
std::vector<double> softmax(std::span<const double> z, double temperature);

/// (z - mean) / (std + eps) with population std. Constant input maps to zeros.
NormalizedLogits zscore_normalize(const LogitVector& z, double eps = kDefaultZscoreEps);
NormalizedLogits zscore_normalize(std::span<const double> z, double eps = kDefaultZscoreEps);

/// Vector-Jacobian product of the z-score transform: given dL/d(zhat), returns
/// dL/dz. `forward` must be the result of normalizing the same z.
std::vector<double> zscore_backward(std::span<const double> z, const NormalizedLogits& forward,
                                    std::span<const double> grad_normalized);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(z + h e_i) - f(z - h e_i)) / 2h for every coordinate.
/// Throws OracleError if any evaluation is non-finite.
std::vector<double> finite_difference_gradient(const ScalarFn& f, std::span<const double> z,
                                               double h);

/// ||a - b||_inf / max(||a||_inf, ||b||_inf, floor). Used by every gradient check.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-12);

}  // namespace rankkd
