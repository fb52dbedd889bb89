#pragma once

// Minimal fully-connected network: dense layers with ReLU or identity
// activations, hand-written backward pass and momentum SGD.
//
// Weights of a layer are stored row-major as [input_dim][output_dim], so a
// layer computes y = x W + b.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rankkd {

enum class Activation : std::uint8_t { Identity = 0, ReLU = 1 };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::Identity;

  bool operator==(const LayerSpec&) const = default;
};

/// Builds [in -> h1 -> ... -> out] with ReLU hidden layers and an identity head.
std::vector<LayerSpec> mlp_architecture(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                        std::size_t output_dim);

/// Throws ConfigError unless dims are positive, chain, and the last layer is Identity.
void validate_architecture(const std::vector<LayerSpec>& specs);

struct DenseLayer {
  LayerSpec spec;
  std::vector<double> weights;  // input_dim * output_dim
  std::vector<double> bias;     // output_dim

  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;
  // Bumped by every in-place update; caches from older versions are stale.
  std::uint64_t version = 0;

  std::size_t input_dim() const { return layers.front().spec.input_dim; }
  std::size_t output_dim() const { return layers.back().spec.output_dim; }
  std::size_t parameter_count() const;
  std::vector<LayerSpec> specs() const;

  /// Same architecture and bitwise-identical parameters (version ignored).
  bool same_parameters(const MlpParams& other) const;
};

/// He-style uniform init: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), b = 0.
MlpParams init_mlp(const std::vector<LayerSpec>& specs, std::uint64_t seed);

struct ForwardCache {
  // inputs[l] is the input to layer l; inputs.back() is the network output.
  std::vector<std::vector<double>> inputs;
  const MlpParams* owner = nullptr;
  std::uint64_t version = 0;
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardCache cache;
};

ForwardResult forward(const MlpParams& m, std::span<const double> x);

/// Logits only, without retaining a cache.
std::vector<double> predict(const MlpParams& m, std::span<const double> x);

struct MlpGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  static MlpGrads zeros_like(const MlpParams& m);
  void set_zero();
  void scale(double factor);
  /// Flattened in checkpoint order (layer by layer, weights then bias).
  std::vector<double> flatten() const;
};

/// Parameter gradients of the scalar loss whose logit-gradient is dL_dlogits.
MlpGrads backward(const MlpParams& m, const ForwardCache& cache, std::span<const double> dL_dlogits);

/// As backward(), but adds into `grads` (for batch accumulation).
void backward_accumulate(const MlpParams& m, const ForwardCache& cache,
                         std::span<const double> dL_dlogits, MlpGrads& grads);

/// Flattened parameter access, in the same order as MlpGrads::flatten().
std::vector<double> flatten_parameters(const MlpParams& m);
void assign_parameters(MlpParams& m, std::span<const double> flat);

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SgdState {
  MlpGrads velocity;
  bool initialized = false;
};

/// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
void sgd_step(MlpParams& m, const MlpGrads& grads, const SgdConfig& cfg, SgdState& state);

// --- checkpoint container ---------------------------------------------------
//
// Little-endian binary:
//   8 bytes  magic "RKDMLP\0\0"
//   u32      format version (1)
//   u64      seed
//   u32      layer count
//   per layer: u32 input_dim, u32 output_dim, u8 activation,
//              f64[input_dim*output_dim] weights (row-major), f64[output_dim] bias

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MlpParams& m, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rankkd
