#pragma once

// Desk-scale teacher/student distillation harness: synthetic Gaussian-cluster
// data, CE-only teacher training, student distillation with the combined
// KL + CE + ranking objective, evaluation and one-axis sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rankkd/error.hpp"
#include "rankkd/losses.hpp"
#include "rankkd/nn.hpp"

namespace rankkd {

struct DatasetSpec {
  std::size_t num_classes = 20;
  std::size_t input_dim = 32;
  std::size_t samples_per_class = 200;
  double cluster_spread = 1.0;
  // Correlation between neighbouring class means; class c and c+d have
  // mean correlation inter_class_correlation^d.
  double inter_class_correlation = 0.7;
  std::uint64_t seed = 7;

  void validate() const;
};

struct Dataset {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() * input_dim
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * input_dim, input_dim};
  }
  bool operator==(const Dataset&) const = default;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Fraction of every class that goes to the training split.
inline constexpr double kTrainFraction = 0.8;

/// Class-conditional Gaussian clusters; per class the first 80% of samples
/// form the training split.
DatasetSplit generate_dataset(const DatasetSpec& spec);

/// Headerless CSV: input_dim feature columns then an integer label.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

struct RunConfig {
  DatasetSpec dataset;
  std::vector<std::size_t> teacher_hidden{256, 256};
  std::vector<std::size_t> student_hidden{32};
  SgdConfig teacher_sgd{0.05, 0.9, 0.0, 60, 64, 11};
  SgdConfig student_sgd{0.05, 0.9, 5e-4, 40, 64, 101};
  LossWeights weights;
  RankingConfig ranking;
  std::size_t eval_every = 1;

  std::vector<LayerSpec> teacher_arch() const;
  std::vector<LayerSpec> student_arch() const;
  void validate() const;
};

enum class Split { Train, Test };

struct MetricsRow {
  std::size_t epoch = 0;
  Split split = Split::Train;
  double total_loss = 0.0;
  double kl_loss = 0.0;
  double ce_loss = 0.0;
  double rk_loss = 0.0;
  double accuracy = 0.0;
  double mean_exact_tau = 0.0;

  /// Throws InputError if accuracy/tau are out of range or a loss is non-finite.
  void validate() const;
};

inline constexpr const char* kMetricsHeader =
    "epoch,split,total_loss,kl_loss,ce_loss,rk_loss,accuracy,mean_exact_tau";

/// One CSV line (no newline), floats with 9 significant digits.
std::string format_metrics_row(const MetricsRow& row);
std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Validates every row, then writes atomically (temp file + rename).
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

struct TrainResult {
  MlpParams model;
  std::vector<MetricsRow> metrics;
};

/// Trains the teacher with cross-entropy only. Rows carry kl_loss = rk_loss = 0
/// and mean_exact_tau = 0 (no reference model).
TrainResult train_teacher(const RunConfig& cfg, const DatasetSplit& data);
TrainResult train_teacher(const RunConfig& cfg);

/// Distills a student from a frozen teacher. `student_init`, when given,
/// replaces the seeded initialization (must match the student architecture).
TrainResult distill_student(const RunConfig& cfg, const MlpParams& teacher,
                            const DatasetSplit& data,
                            const std::optional<MlpParams>& student_init = std::nullopt);
TrainResult distill_student(const RunConfig& cfg, const MlpParams& teacher);

/// Accuracy on `split`; with a teacher also the combined-loss parts and the
/// mean exact tau between teacher and model logits. Empty split throws.
MetricsRow evaluate(const MlpParams& model, const Dataset& split, const MlpParams* teacher,
                    const LossWeights& weights, const RankingConfig& ranking,
                    std::size_t epoch = 0, Split tag = Split::Test);

/// Throws ConfigError unless the model maps input_dim features to num_classes logits.
void check_compatible(const MlpParams& model, const Dataset& data, const std::string& role);

enum class SweepAxis { Gamma, K, Temperature, Subset };

SweepAxis parse_sweep_axis(const std::string& s);
std::string to_string(SweepAxis axis);

/// Applies one sweep value to a config. Subset values: v > 0 keeps the top v%
/// teacher channels, v < 0 the bottom |v|%.
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  std::vector<MetricsRow> metrics;
  double final_accuracy = 0.0;
  double final_mean_tau = 0.0;
};

/// Thrown when one sweep value fails; names the value.
struct SweepError : Error {
  SweepError(double value, const std::string& what);
  double value;
};

std::vector<SweepPoint> sweep(const RunConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const MlpParams& teacher,
                              const DatasetSplit& data);

/// Final test row of a run.
const MetricsRow& final_test_row(const std::vector<MetricsRow>& rows);

}  // namespace rankkd
