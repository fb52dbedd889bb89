#include "rankkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <charconv>
#include <cstdio>

#include "rankkd/error.hpp"

namespace rankkd {

namespace {

constexpr double kProbFloor = 1e-12;

void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": size mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

// Per-evaluation weight check. The "not all zero" rule of LossWeights::validate
// belongs to run configuration; the pure loss ops accept all-zero weights.
void check_weights(const LossWeights& w) {
  if (!(w.alpha >= 0.0) || !(w.beta >= 0.0) || !(w.gamma >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(w.temperature > 0.0) || !std::isfinite(w.temperature)) {
    throw ConfigError("temperature must be positive");
  }
}

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

double pair_count(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

// Value and d/d(student difference) of one pair term for the chosen form.
struct PairTerm {
  double value;
  double slope;
};

PairTerm pair_term(RankingForm form, double k, double dt, double ds) {
  switch (form) {
    case RankingForm::Symmetric:
    case RankingForm::Form1: {
      const double tt = std::tanh(k * dt);
      const double ts = std::tanh(k * ds);
      return {tt * ts, tt * k * (1.0 - ts * ts)};
    }
    case RankingForm::Form2: {
      const double k2 = k * k;
      const double th = std::tanh(k2 * dt * ds);
      return {th, k2 * dt * (1.0 - th * th)};
    }
    case RankingForm::Form3: {
      const double st = sgn(dt);
      const double ts = std::tanh(k * ds);
      return {st * ts, st * k * (1.0 - ts * ts)};
    }
  }
  return {0.0, 0.0};
}

// Teacher/student values restricted to the subset, normalized when configured.
struct RankingInputs {
  std::vector<std::size_t> channels;
  std::vector<double> teacher;
  std::vector<double> student_raw;
  NormalizedLogits student_norm;
  std::vector<double> student;  // what the pair terms see
};

RankingInputs prepare_ranking(const LogitVector& z_t, const LogitVector& z_s,
                              const RankingConfig& cfg) {
  require_same_size(z_t.size(), z_s.size(), "ranking_loss");
  cfg.validate();
  RankingInputs in;
  in.channels = select_channels(z_t, cfg.subset);
  for (std::size_t c : in.channels) {
    in.teacher.push_back(z_t[c]);
    in.student_raw.push_back(z_s[c]);
  }
  if (cfg.normalize_inputs) {
    in.teacher = zscore_normalize(std::span<const double>(in.teacher), cfg.normalize_eps).values;
    in.student_norm = zscore_normalize(std::span<const double>(in.student_raw), cfg.normalize_eps);
    in.student = in.student_norm.values;
  } else {
    in.student = in.student_raw;
  }
  return in;
}

double ranking_value(const RankingInputs& in, const RankingConfig& cfg,
                     std::vector<double>* grad_subset) {
  const std::size_t n = in.channels.size();
  const double scale = -1.0 / pair_count(n);
  double sum = 0.0;
  if (grad_subset) grad_subset->assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const PairTerm t = pair_term(cfg.form, cfg.steepness, in.teacher[i] - in.teacher[j],
                                   in.student[i] - in.student[j]);
      sum += t.value;
      if (grad_subset) {
        (*grad_subset)[i] += scale * t.slope;
        (*grad_subset)[j] -= scale * t.slope;
      }
    }
  }
  return scale * sum;
}

std::vector<double> ranking_gradient_from(const RankingInputs& in, const RankingConfig& cfg,
                                          std::size_t channels, double* loss_out) {
  std::vector<double> grad_subset;
  const double loss = ranking_value(in, cfg, &grad_subset);
  if (loss_out) *loss_out = loss;
  if (cfg.normalize_inputs) {
    grad_subset = zscore_backward(in.student_raw, in.student_norm, grad_subset);
  }
  std::vector<double> grad(channels, 0.0);
  for (std::size_t m = 0; m < in.channels.size(); ++m) grad[in.channels[m]] = grad_subset[m];
  return grad;
}

std::vector<double> kl_gradient_scaled(std::span<const double> q_t, std::span<const double> q_s,
                                       double temperature, bool scale_t2) {
  // d/dz_s of T^2 KL is -T (q_t - q_s); without the T^2 factor divide by T^2.
  const double factor = scale_t2 ? temperature : 1.0 / temperature;
  std::vector<double> g(q_t.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -factor * (q_t[i] - q_s[i]);
  return g;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(alpha + beta + gamma > 0.0)) throw ConfigError("loss weights must not all be zero");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be positive");
  }
}

void RankingConfig::validate() const {
  if (!(steepness > 0.0) || !std::isfinite(steepness)) {
    throw ConfigError("ranking steepness k must be positive");
  }
  if (subset.kind != SubsetKind::All && !(subset.percent > 0.0 && subset.percent <= 100.0)) {
    throw ConfigError("subset percent must lie in (0, 100]");
  }
  if (!(normalize_eps > 0.0)) throw ConfigError("normalization eps must be positive");
}

std::string to_string(RankingForm form) {
  switch (form) {
    case RankingForm::Symmetric: return "symmetric";
    case RankingForm::Form1: return "form1";
    case RankingForm::Form2: return "form2";
    case RankingForm::Form3: return "form3";
  }
  return "?";
}

RankingForm parse_ranking_form(const std::string& s) {
  if (s == "symmetric") return RankingForm::Symmetric;
  if (s == "form1") return RankingForm::Form1;
  if (s == "form2") return RankingForm::Form2;
  if (s == "form3") return RankingForm::Form3;
  throw ConfigError("unknown ranking form '" + s + "'");
}

std::string to_string(const ChannelSubset& subset) {
  if (subset.kind == SubsetKind::All) return "all";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), subset.percent);
  return std::string(subset.kind == SubsetKind::TopPercent ? "top:" : "min:") +
         std::string(buf, res.ptr);
}

ChannelSubset parse_channel_subset(const std::string& s) {
  if (s == "all") return ChannelSubset::all();
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("bad subset '" + s + "' (all|top:P|min:P)");
  const std::string head = s.substr(0, colon);
  const std::string tail = s.substr(colon + 1);
  double p = 0.0;
  const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), p);
  if (ec != std::errc() || ptr != tail.data() + tail.size()) {
    throw ConfigError("bad subset percent in '" + s + "'");
  }
  ChannelSubset out;
  if (head == "top") out = ChannelSubset::top(p);
  else if (head == "min") out = ChannelSubset::min(p);
  else throw ConfigError("bad subset '" + s + "' (all|top:P|min:P)");
  if (!(p > 0.0 && p <= 100.0)) throw ConfigError("subset percent must lie in (0, 100]");
  return out;
}

double kl_loss(const ProbVector& q_t, const ProbVector& q_s, double temperature, bool scale_t2) {
  require_same_size(q_t.size(), q_s.size(), "kl_loss");
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < q_t.size(); ++i) {
    if (q_t[i] > 0.0) sum += q_t[i] * std::log(q_t[i] / std::max(q_s[i], kProbFloor));
  }
  return scale_t2 ? temperature * temperature * sum : sum;
}

std::vector<double> kl_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                double temperature) {
  require_same_size(z_t.size(), z_s.size(), "kl_gradient");
  const auto q_t = softmax(z_t.values(), temperature);
  const auto q_s = softmax(z_s.values(), temperature);
  return kl_gradient_scaled(q_t, q_s, temperature, true);
}

double cross_entropy_loss(const LogitVector& z_s, std::size_t label) {
  if (label >= z_s.size()) throw InputError("label " + std::to_string(label) + " out of range");
  const auto v = z_s.values();
  const double zmax = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double z : v) total += std::exp(z - zmax);
  return zmax + std::log(total) - z_s[label];
}

std::vector<double> ce_gradient(const LogitVector& z_s, std::size_t label) {
  if (label >= z_s.size()) throw InputError("label " + std::to_string(label) + " out of range");
  auto g = softmax(z_s.values(), 1.0);
  g[label] -= 1.0;
  return g;
}

KendallBreakdown kendall_tau_exact(const LogitVector& z_t, const LogitVector& z_s) {
  require_same_size(z_t.size(), z_s.size(), "kendall_tau_exact");
  KendallBreakdown out;
  const std::size_t n = z_t.size();
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double s = sgn(z_t[i] - z_t[j]) * sgn(z_s[i] - z_s[j]);
      if (s > 0) ++out.concordant;
      else if (s < 0) ++out.discordant;
      else ++out.ties;
    }
  }
  out.tau = (static_cast<double>(out.concordant) - static_cast<double>(out.discordant)) /
            pair_count(n);
  return out;
}

double diff_kendall_tau(const LogitVector& z_t, const LogitVector& z_s, double k) {
  require_same_size(z_t.size(), z_s.size(), "diff_kendall_tau");
  if (!(k > 0.0)) throw InputError("steepness k must be positive");
  const std::size_t n = z_t.size();
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      sum += std::tanh(k * (z_t[i] - z_t[j])) * std::tanh(k * (z_s[i] - z_s[j]));
    }
  }
  return sum / pair_count(n);
}

double diff_kendall_tau_expanded(const LogitVector& z_t, const LogitVector& z_s, double k) {
  require_same_size(z_t.size(), z_s.size(), "diff_kendall_tau_expanded");
  if (!(k > 0.0)) throw InputError("steepness k must be positive");
  const std::size_t n = z_t.size();
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double a = 1.0 - 2.0 / (1.0 + std::exp(2.0 * (z_t[i] - z_t[j]) * k));
      const double b = 1.0 - 2.0 / (1.0 + std::exp(2.0 * (z_s[i] - z_s[j]) * k));
      sum += a * b;
    }
  }
  return 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1)) * sum;
}

std::vector<std::size_t> select_channels(const LogitVector& z_t, const ChannelSubset& subset) {
  const std::size_t c = z_t.size();
  std::vector<std::size_t> idx(c);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (subset.kind == SubsetKind::All) return idx;
  // ceil(p*C/100); the small slack keeps exact products like 10*20/100 at 2.
  const auto count = static_cast<std::size_t>(
      std::ceil(subset.percent * static_cast<double>(c) / 100.0 - 1e-9));
  if (count < 2) {
    throw ConfigError("channel subset " + to_string(subset) + " of " + std::to_string(c) +
                      " channels keeps fewer than 2 channels");
  }
  const bool top = subset.kind == SubsetKind::TopPercent;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return top ? z_t[a] > z_t[b] : z_t[a] < z_t[b];
  });
  idx.resize(std::min(count, c));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double ranking_loss(const LogitVector& z_t, const LogitVector& z_s, const RankingConfig& cfg) {
  return ranking_value(prepare_ranking(z_t, z_s, cfg), cfg, nullptr);
}

std::vector<double> ranking_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                     const RankingConfig& cfg) {
  return ranking_gradient_from(prepare_ranking(z_t, z_s, cfg), cfg, z_s.size(), nullptr);
}

LossParts combined_loss(const LogitVector& z_t, const LogitVector& z_s, std::size_t label,
                        const LossWeights& w, const RankingConfig& cfg) {
  require_same_size(z_t.size(), z_s.size(), "combined_loss");
  check_weights(w);
  LossParts parts;
  parts.kl = kl_loss(softmax_with_temperature(z_t, w.temperature),
                     softmax_with_temperature(z_s, w.temperature), w.temperature, w.kl_scale_t2);
  parts.ce = cross_entropy_loss(z_s, label);
  parts.rk = ranking_loss(z_t, z_s, cfg);
  parts.total = w.alpha * parts.kl + w.beta * parts.ce + w.gamma * parts.rk;
  return parts;
}

LossParts combined_loss_and_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                     std::size_t label, const LossWeights& w,
                                     const RankingConfig& cfg, std::vector<double>& grad) {
  require_same_size(z_t.size(), z_s.size(), "combined_gradient");
  check_weights(w);
  const std::size_t c = z_s.size();
  LossParts parts;

  const auto q_t = softmax(z_t.values(), w.temperature);
  const auto q_s = softmax(z_s.values(), w.temperature);
  parts.kl = kl_loss(ProbVector(q_t), ProbVector(q_s), w.temperature, w.kl_scale_t2);
  const auto g_kl = kl_gradient_scaled(q_t, q_s, w.temperature, w.kl_scale_t2);

  parts.ce = cross_entropy_loss(z_s, label);
  const auto g_ce = ce_gradient(z_s, label);

  std::vector<double> g_rk(c, 0.0);
  if (w.gamma != 0.0) {
    g_rk = ranking_gradient_from(prepare_ranking(z_t, z_s, cfg), cfg, c, &parts.rk);
  } else {
    parts.rk = ranking_loss(z_t, z_s, cfg);
  }

  parts.total = w.alpha * parts.kl + w.beta * parts.ce + w.gamma * parts.rk;
  grad.assign(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    grad[i] = w.alpha * g_kl[i] + w.beta * g_ce[i] + w.gamma * g_rk[i];
  }
  return parts;
}

std::vector<double> combined_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                      std::size_t label, const LossWeights& w,
                                      const RankingConfig& cfg) {
  std::vector<double> grad;
  combined_loss_and_gradient(z_t, z_s, label, w, cfg, grad);
  return grad;
}

std::vector<ProfileRow> gradient_profile(const LogitVector& z_t, const LogitVector& z_s,
                                         const LossWeights& w, const RankingConfig& cfg) {
  require_same_size(z_t.size(), z_s.size(), "gradient_profile");
  check_weights(w);
  const auto q_t = softmax(z_t.values(), w.temperature);
  const auto q_s = softmax(z_s.values(), w.temperature);
  const auto g_kl = kl_gradient_scaled(q_t, q_s, w.temperature, w.kl_scale_t2);
  const auto g_rk = ranking_gradient(z_t, z_s, cfg);
  std::vector<ProfileRow> rows(z_t.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = {i, q_t[i], std::abs(g_kl[i]), std::abs(g_rk[i])};
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ProfileRow& a, const ProfileRow& b) { return a.q_t > b.q_t; });
  return rows;
}

double spread_ratio(const std::vector<double>& magnitudes) {
  if (magnitudes.empty()) throw InputError("spread_ratio of empty vector");
  const auto [lo, hi] = std::minmax_element(magnitudes.begin(), magnitudes.end());
  if (*lo == 0.0) return std::numeric_limits<double>::infinity();
  return *hi / *lo;
}

}  // namespace rankkd
