#include "rankkd/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "rankkd/error.hpp"
#include "rankkd/random.hpp"

namespace rankkd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::vector<LayerSpec> mlp_architecture(std::size_t input_dim,
                                        const std::vector<std::size_t>& hidden,
                                        std::size_t output_dim) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    specs.push_back({in, h, Activation::ReLU});
    in = h;
  }
  specs.push_back({in, output_dim, Activation::Identity});
  return specs;
}

void validate_architecture(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (specs[l].input_dim == 0 || specs[l].output_dim == 0) {
      throw ConfigError("layer " + std::to_string(l) + " has a zero dimension");
    }
    if (l > 0 && specs[l].input_dim != specs[l - 1].output_dim) {
      throw ConfigError("layer " + std::to_string(l) + " input dim " +
                        std::to_string(specs[l].input_dim) + " does not match previous output " +
                        std::to_string(specs[l - 1].output_dim));
    }
  }
  if (specs.back().activation != Activation::Identity) {
    throw ConfigError("final layer must be Identity (raw logits)");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<LayerSpec> MlpParams::specs() const {
  std::vector<LayerSpec> s;
  for (const auto& l : layers) s.push_back(l.spec);
  return s;
}

bool MlpParams::same_parameters(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (!(a.spec == b.spec) || a.weights.size() != b.weights.size() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
    // Bitwise comparison: distinguishes -0.0 and compares NaN payloads.
    if (std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(double)) != 0 ||
        std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

MlpParams init_mlp(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  validate_architecture(specs);
  MlpParams m;
  m.seed = seed;
  Rng rng(seed);
  for (const auto& s : specs) {
    DenseLayer layer;
    layer.spec = s;
    const double bound = std::sqrt(6.0 / static_cast<double>(s.input_dim));
    layer.weights.resize(s.input_dim * s.output_dim);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(s.output_dim, 0.0);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

namespace {

void layer_forward(const DenseLayer& layer, std::span<const double> x, std::vector<double>& y) {
  const std::size_t in = layer.spec.input_dim;
  const std::size_t out = layer.spec.output_dim;
  y.assign(layer.bias.begin(), layer.bias.end());
  const double* w = layer.weights.data();
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += xi * row[o];
  }
  if (layer.spec.activation == Activation::ReLU) {
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

void check_input(const MlpParams& m, std::span<const double> x) {
  if (m.layers.empty()) throw UsageError("forward on an empty network");
  if (x.size() != m.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " features, network expects " +
                     std::to_string(m.input_dim()));
  }
}

}  // namespace

ForwardResult forward(const MlpParams& m, std::span<const double> x) {
  check_input(m, x);
  ForwardResult r;
  r.cache.owner = &m;
  r.cache.version = m.version;
  r.cache.inputs.reserve(m.layers.size() + 1);
  r.cache.inputs.emplace_back(x.begin(), x.end());
  for (const auto& layer : m.layers) {
    std::vector<double> y;
    layer_forward(layer, r.cache.inputs.back(), y);
    r.cache.inputs.push_back(std::move(y));
  }
  r.logits = r.cache.inputs.back();
  return r;
}

std::vector<double> predict(const MlpParams& m, std::span<const double> x) {
  check_input(m, x);
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : m.layers) {
    layer_forward(layer, cur, next);
    std::swap(cur, next);
  }
  return cur;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& m) {
  MlpGrads g;
  for (const auto& l : m.layers) {
    g.weights.emplace_back(l.weights.size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void MlpGrads::set_zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void MlpGrads::scale(double factor) {
  for (auto& w : weights) for (double& v : w) v *= factor;
  for (auto& b : bias) for (double& v : b) v *= factor;
}

std::vector<double> MlpGrads::flatten() const {
  std::vector<double> flat;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].begin(), weights[l].end());
    flat.insert(flat.end(), bias[l].begin(), bias[l].end());
  }
  return flat;
}

void backward_accumulate(const MlpParams& m, const ForwardCache& cache,
                         std::span<const double> dL_dlogits, MlpGrads& grads) {
  if (cache.owner != &m || cache.version != m.version ||
      cache.inputs.size() != m.layers.size() + 1) {
    throw UsageError("backward called with a stale or foreign forward cache");
  }
  if (dL_dlogits.size() != m.output_dim()) throw ShapeError("logit gradient size mismatch");
  if (grads.weights.size() != m.layers.size()) throw ShapeError("gradient buffer shape mismatch");

  std::vector<double> delta(dL_dlogits.begin(), dL_dlogits.end());
  std::vector<double> prev;
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const DenseLayer& layer = m.layers[l];
    const std::size_t in = layer.spec.input_dim;
    const std::size_t out = layer.spec.output_dim;
    const auto& x = cache.inputs[l];
    if (layer.spec.activation == Activation::ReLU) {
      // Subgradient 0 at the kink: output was clamped to exactly 0.
      const auto& y = cache.inputs[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        if (!(y[o] > 0.0)) delta[o] = 0.0;
      }
    }
    auto& gw = grads.weights[l];
    auto& gb = grads.bias[l];
    for (std::size_t o = 0; o < out; ++o) gb[o] += delta[o];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* row = gw.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) row[o] += xi * delta[o];
    }
    if (l == 0) break;
    prev.assign(in, 0.0);
    const double* w = layer.weights.data();
    for (std::size_t i = 0; i < in; ++i) {
      const double* row = w + i * out;
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += row[o] * delta[o];
      prev[i] = s;
    }
    std::swap(delta, prev);
  }
}

MlpGrads backward(const MlpParams& m, const ForwardCache& cache,
                  std::span<const double> dL_dlogits) {
  MlpGrads g = MlpGrads::zeros_like(m);
  backward_accumulate(m, cache, dL_dlogits, g);
  return g;
}

std::vector<double> flatten_parameters(const MlpParams& m) {
  std::vector<double> flat;
  flat.reserve(m.parameter_count());
  for (const auto& l : m.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void assign_parameters(MlpParams& m, std::span<const double> flat) {
  if (flat.size() != m.parameter_count()) throw ShapeError("flat parameter size mismatch");
  std::size_t k = 0;
  for (auto& l : m.layers) {
    for (double& w : l.weights) w = flat[k++];
    for (double& b : l.bias) b = flat[k++];
  }
  ++m.version;
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

void sgd_step(MlpParams& m, const MlpGrads& grads, const SgdConfig& cfg, SgdState& state) {
  if (grads.weights.size() != m.layers.size() || grads.bias.size() != m.layers.size()) {
    throw UsageError("sgd_step: gradient shape does not match the network");
  }
  if (!state.initialized) {
    state.velocity = MlpGrads::zeros_like(m);
    state.initialized = true;
  }
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v) {
    if (p.size() != g.size() || p.size() != v.size()) {
      throw UsageError("sgd_step: gradient shape does not match the network");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * p[i]);
      p[i] -= cfg.learning_rate * v[i];
    }
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    update(m.layers[l].weights, grads.weights[l], state.velocity.weights[l]);
    update(m.layers[l].bias, grads.bias[l], state.velocity.bias[l]);
  }
  ++m.version;
}

// --- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'K', 'D', 'M', 'L', 'P', '\0', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("truncated checkpoint " + path.string());
  }
  return v;
}

}  // namespace

void save_checkpoint(const MlpParams& m, const std::filesystem::path& path) {
  validate_architecture(m.specs());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, m.seed);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(l.spec.input_dim));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(l.spec.output_dim));
      put<std::uint8_t>(os, static_cast<std::uint8_t>(l.spec.activation));
      os.write(reinterpret_cast<const char*>(l.weights.data()),
               static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
      os.write(reinterpret_cast<const char*>(l.bias.data()),
               static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    }
    if (!os.flush()) throw InputError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a network checkpoint");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  MlpParams m;
  m.seed = get<std::uint64_t>(is, path);
  const auto count = get<std::uint32_t>(is, path);
  if (count == 0 || count > 1024) throw CheckpointError("bad layer count in " + path.string());
  for (std::uint32_t l = 0; l < count; ++l) {
    DenseLayer layer;
    layer.spec.input_dim = get<std::uint32_t>(is, path);
    layer.spec.output_dim = get<std::uint32_t>(is, path);
    const auto act = get<std::uint8_t>(is, path);
    if (act > 1) throw CheckpointError("bad activation code in " + path.string());
    layer.spec.activation = static_cast<Activation>(act);
    if (layer.spec.input_dim == 0 || layer.spec.output_dim == 0 ||
        layer.spec.input_dim * layer.spec.output_dim > (std::size_t{1} << 28)) {
      throw CheckpointError("bad layer shape in " + path.string());
    }
    layer.weights.resize(layer.spec.input_dim * layer.spec.output_dim);
    layer.bias.resize(layer.spec.output_dim);
    if (!is.read(reinterpret_cast<char*>(layer.weights.data()),
                 static_cast<std::streamsize>(layer.weights.size() * sizeof(double))) ||
        !is.read(reinterpret_cast<char*>(layer.bias.data()),
                 static_cast<std::streamsize>(layer.bias.size() * sizeof(double)))) {
      throw CheckpointError("truncated checkpoint " + path.string());
    }
    m.layers.push_back(std::move(layer));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes in checkpoint " + path.string());
  }
  try {
    validate_architecture(m.specs());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  for (const auto& l : m.layers) {
    for (double v : l.weights) if (!std::isfinite(v)) throw CheckpointError("non-finite weight in checkpoint");
    for (double v : l.bias) if (!std::isfinite(v)) throw CheckpointError("non-finite bias in checkpoint");
  }
  return m;
}

}  // namespace rankkd
