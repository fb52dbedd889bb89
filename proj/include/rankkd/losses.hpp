#pragma once

// Distillation losses and their closed-form gradients with respect to the
// student logits: temperature KL, cross-entropy, Kendall's tau (exact and
// tanh-smoothed), the ranking loss in its four forms, and the weighted sum.
//
// Pairwise terms are O(C^2) per sample; intended for C up to a few thousand.

#include <cstddef>
#include <string>
#include <vector>

#include "rankkd/numeric.hpp"

namespace rankkd {

struct LossWeights {
  double alpha = 0.9;        // KL
  double beta = 0.1;         // cross-entropy
  double gamma = 0.9;        // ranking
  double temperature = 4.0;
  bool kl_scale_t2 = true;   // multiply the KL term by T^2

  void validate() const;
};

enum class RankingForm { Symmetric, Form1, Form2, Form3 };

enum class SubsetKind { All, TopPercent, MinPercent };

struct ChannelSubset {
  SubsetKind kind = SubsetKind::All;
  double percent = 100.0;  // in (0, 100]; ignored for All

  static ChannelSubset all() { return {}; }
  static ChannelSubset top(double p) { return {SubsetKind::TopPercent, p}; }
  static ChannelSubset min(double p) { return {SubsetKind::MinPercent, p}; }
};

struct RankingConfig {
  double steepness = 1.0;  // k
  RankingForm form = RankingForm::Symmetric;
  ChannelSubset subset;
  bool normalize_inputs = true;
  double normalize_eps = kDefaultZscoreEps;

  void validate() const;
};

std::string to_string(RankingForm form);
RankingForm parse_ranking_form(const std::string& s);
std::string to_string(const ChannelSubset& subset);
ChannelSubset parse_channel_subset(const std::string& s);

struct KendallBreakdown {
  double tau = 0.0;
  std::size_t concordant = 0;
  std::size_t discordant = 0;
  std::size_t ties = 0;
};

// --- KL ---------------------------------------------------------------------

/// sum_i q_t log(q_t / q_s), times T^2 when scale_t2. q_s is clamped at 1e-12.
double kl_loss(const ProbVector& q_t, const ProbVector& q_s, double temperature, bool scale_t2);

/// -T (q_t - q_s): gradient of the T^2-scaled KL loss w.r.t. the student logits.
std::vector<double> kl_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                double temperature);

// --- cross-entropy ----------------------------------------------------------

double cross_entropy_loss(const LogitVector& z_s, std::size_t label);
std::vector<double> ce_gradient(const LogitVector& z_s, std::size_t label);

// --- Kendall's tau ----------------------------------------------------------

/// Exact tau over all C(C-1)/2 pairs. A pair with a zero difference on either
/// side is a tie and counts toward neither P_c nor P_d.
KendallBreakdown kendall_tau_exact(const LogitVector& z_t, const LogitVector& z_s);

/// tanh-smoothed tau with steepness k.
double diff_kendall_tau(const LogitVector& z_t, const LogitVector& z_s, double k);

/// The same quantity written with tanh(x) = 1 - 2/(exp(2x) + 1) expanded.
double diff_kendall_tau_expanded(const LogitVector& z_t, const LogitVector& z_s, double k);

// --- ranking loss -----------------------------------------------------------

/// Indices of the channels the ranking loss pairs over, ascending.
std::vector<std::size_t> select_channels(const LogitVector& z_t, const ChannelSubset& subset);

/// Negative tau-like similarity per cfg.form, in [-1, 1].
double ranking_loss(const LogitVector& z_t, const LogitVector& z_s, const RankingConfig& cfg);

/// d ranking_loss / d z_s. Teacher factors are constants; channels outside the
/// subset get zero; normalization is differentiated exactly.
std::vector<double> ranking_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                     const RankingConfig& cfg);

// --- combined objective -----------------------------------------------------

struct LossParts {
  double total = 0.0;
  double kl = 0.0;
  double ce = 0.0;
  double rk = 0.0;
};

LossParts combined_loss(const LogitVector& z_t, const LogitVector& z_s, std::size_t label,
                        const LossWeights& w, const RankingConfig& cfg);

std::vector<double> combined_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                      std::size_t label, const LossWeights& w,
                                      const RankingConfig& cfg);

/// Loss and gradient in one pass; used by the training loop.
LossParts combined_loss_and_gradient(const LogitVector& z_t, const LogitVector& z_s,
                                     std::size_t label, const LossWeights& w,
                                     const RankingConfig& cfg, std::vector<double>& grad);

// --- gradient profile -------------------------------------------------------

struct ProfileRow {
  std::size_t channel = 0;
  double q_t = 0.0;
  double abs_kl_grad = 0.0;
  double abs_rk_grad = 0.0;
};

/// Per-channel teacher probability with the magnitudes of the (unweighted) KL
/// and ranking gradients, sorted by q_t descending.
std::vector<ProfileRow> gradient_profile(const LogitVector& z_t, const LogitVector& z_s,
                                         const LossWeights& w, const RankingConfig& cfg);

/// max/min of |g| over channels; +inf when some entry is exactly zero.
double spread_ratio(const std::vector<double>& magnitudes);

}  // namespace rankkd
