#include "rankkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rankkd/error.hpp"
#include "rankkd/random.hpp"

namespace rankkd {

// --- dataset ----------------------------------------------------------------

void DatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (samples_per_class < 2) throw ConfigError("samples_per_class must be at least 2");
  if (!(cluster_spread > 0.0)) throw ConfigError("cluster_spread must be positive");
  if (!(inter_class_correlation >= 0.0 && inter_class_correlation < 1.0)) {
    throw ConfigError("inter_class_correlation must lie in [0, 1)");
  }
}

namespace {

std::size_t train_count(std::size_t samples_per_class) {
  return static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(samples_per_class)));
}

}  // namespace

DatasetSplit generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_dim;
  Rng means_rng(derive_seed(spec.seed, 0));
  Rng sample_rng(derive_seed(spec.seed, 1));

  // AR(1) chain of class means: neighbouring classes are similar, which gives
  // the teacher's soft labels a non-trivial ordering over wrong classes.
  const double rho = spec.inter_class_correlation;
  const double innovation = std::sqrt(1.0 - rho * rho);
  std::vector<double> means(spec.num_classes * d);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t f = 0; f < d; ++f) {
      const double g = means_rng.normal();
      means[c * d + f] = c == 0 ? g : rho * means[(c - 1) * d + f] + innovation * g;
    }
  }

  DatasetSplit out;
  for (Dataset* ds : {&out.train, &out.test}) {
    ds->input_dim = d;
    ds->num_classes = spec.num_classes;
  }
  const std::size_t n_train = train_count(spec.samples_per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      Dataset& ds = s < n_train ? out.train : out.test;
      for (std::size_t f = 0; f < d; ++f) {
        ds.features.push_back(means[c * d + f] + spec.cluster_spread * sample_rng.normal());
      }
      ds.labels.push_back(c);
    }
  }
  return out;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw InputError("cannot write dataset " + path.string());
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (double v : data.row(i)) {
        std::snprintf(buf, sizeof(buf), "%.17g,", v);
        os << buf;
      }
      os << data.labels[i] << '\n';
    }
    if (!os.flush()) throw InputError("failed writing dataset " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open dataset " + path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t max_label = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw InputError(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    if (ds.input_dim == 0) ds.input_dim = cells.size() - 1;
    if (cells.size() - 1 != ds.input_dim) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
    for (std::size_t f = 0; f < ds.input_dim; ++f) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[f], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[f].size() || !std::isfinite(v)) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad feature '" + cells[f] + "'");
      }
      ds.features.push_back(v);
    }
    const std::string& lab = cells.back();
    if (lab.empty() || lab.find_first_not_of("0123456789") != std::string::npos) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + lab + "'");
    }
    ds.labels.push_back(std::stoul(lab));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.num_classes = ds.labels.empty() ? 0 : max_label + 1;
  return ds;
}

// --- config -----------------------------------------------------------------

std::vector<LayerSpec> RunConfig::teacher_arch() const {
  return mlp_architecture(dataset.input_dim, teacher_hidden, dataset.num_classes);
}

std::vector<LayerSpec> RunConfig::student_arch() const {
  return mlp_architecture(dataset.input_dim, student_hidden, dataset.num_classes);
}

void RunConfig::validate() const {
  dataset.validate();
  validate_architecture(teacher_arch());
  validate_architecture(student_arch());
  teacher_sgd.validate();
  student_sgd.validate();
  weights.validate();
  ranking.validate();
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
}

// --- metrics ----------------------------------------------------------------

void MetricsRow::validate() const {
  for (double v : {total_loss, kl_loss, ce_loss, rk_loss}) {
    if (!std::isfinite(v)) throw InputError("metrics row has a non-finite loss");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw InputError("metrics row accuracy out of [0, 1]");
  if (!(mean_exact_tau >= -1.0 && mean_exact_tau <= 1.0)) {
    throw InputError("metrics row mean_exact_tau out of [-1, 1]");
  }
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", row.epoch,
                row.split == Split::Train ? "train" : "test", row.total_loss, row.kl_loss,
                row.ce_loss, row.rk_loss, row.accuracy, row.mean_exact_tau);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    r.validate();
    out += format_metrics_row(r);
    out += '\n';
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  const std::string text = metrics_csv(rows);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write metrics file " + path.string());
    os << text;
    if (!os.flush()) throw InputError("failed writing metrics file " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

const MetricsRow& final_test_row(const std::vector<MetricsRow>& rows) {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->split == Split::Test) return *it;
  }
  throw InputError("run produced no test rows");
}

// --- training ---------------------------------------------------------------

void check_compatible(const MlpParams& model, const Dataset& data, const std::string& role) {
  if (model.layers.empty()) throw ConfigError(role + " network is empty");
  if (model.input_dim() != data.input_dim || model.output_dim() != data.num_classes) {
    throw ConfigError(role + " maps " + std::to_string(model.input_dim()) + " -> " +
                      std::to_string(model.output_dim()) + " but data has " +
                      std::to_string(data.input_dim) + " features and " +
                      std::to_string(data.num_classes) + " classes");
  }
}

namespace {

std::vector<std::vector<double>> all_logits(const MlpParams& m, const Dataset& data) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(predict(m, data.row(i)));
  return out;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// `teacher_logits` empty means no reference model.
MetricsRow evaluate_with(const MlpParams& model, const Dataset& data,
                         const std::vector<std::vector<double>>& teacher_logits,
                         const LossWeights& weights, const RankingConfig& ranking,
                         std::size_t epoch, Split tag) {
  if (data.size() == 0) throw InputError("cannot evaluate on an empty split");
  check_compatible(model, data, "model");
  MetricsRow row;
  row.epoch = epoch;
  row.split = tag;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto z = predict(model, data.row(i));
    if (!all_finite(z)) {
      throw TrainingError("non-finite logits at epoch " + std::to_string(epoch));
    }
    if (argmax(z) == data.labels[i]) ++correct;
    const LogitVector zs(std::move(z));
    if (teacher_logits.empty()) {
      const double ce = cross_entropy_loss(zs, data.labels[i]);
      row.ce_loss += ce;
      row.total_loss += ce;
    } else {
      const LogitVector zt(teacher_logits[i]);
      const LossParts p = combined_loss(zt, zs, data.labels[i], weights, ranking);
      row.total_loss += p.total;
      row.kl_loss += p.kl;
      row.ce_loss += p.ce;
      row.rk_loss += p.rk;
      row.mean_exact_tau += kendall_tau_exact(zt, zs).tau;
    }
  }
  const auto n = static_cast<double>(data.size());
  row.total_loss /= n;
  row.kl_loss /= n;
  row.ce_loss /= n;
  row.rk_loss /= n;
  row.mean_exact_tau /= n;
  row.accuracy = static_cast<double>(correct) / n;
  if (!std::isfinite(row.total_loss)) {
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
  }
  return row;
}

// Per-sample objective: fills dL/dlogits and returns the loss.
using SampleObjective =
    std::function<double(std::size_t index, const std::vector<double>& logits, std::vector<double>& grad)>;

void run_sgd(MlpParams& model, const SgdConfig& sgd, const Dataset& train,
             const SampleObjective& objective, std::size_t eval_every,
             const std::function<void(std::size_t epoch)>& on_eval) {
  on_eval(0);
  Rng shuffle_rng(derive_seed(sgd.seed, 0x5348));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SgdState state;
  MlpGrads grads = MlpGrads::zeros_like(model);
  std::vector<double> dlogits;
  for (std::size_t epoch = 1; epoch <= sgd.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
      const std::size_t end = std::min(order.size(), start + sgd.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      grads.set_zero();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        ForwardResult fr = forward(model, train.row(idx));
        if (!all_finite(fr.logits)) {
          throw TrainingError("non-finite logits at epoch " + std::to_string(epoch));
        }
        const double loss = objective(idx, fr.logits, dlogits);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
        }
        for (double& g : dlogits) g *= inv_batch;
        backward_accumulate(model, fr.cache, dlogits, grads);
      }
      sgd_step(model, grads, sgd, state);
    }
    if (epoch % eval_every == 0 || epoch == sgd.epochs) on_eval(epoch);
  }
}

}  // namespace

MetricsRow evaluate(const MlpParams& model, const Dataset& split, const MlpParams* teacher,
                    const LossWeights& weights, const RankingConfig& ranking, std::size_t epoch,
                    Split tag) {
  if (split.size() == 0) throw InputError("cannot evaluate on an empty split");
  std::vector<std::vector<double>> t;
  if (teacher) {
    check_compatible(*teacher, split, "teacher");
    t = all_logits(*teacher, split);
  }
  return evaluate_with(model, split, t, weights, ranking, epoch, tag);
}

TrainResult train_teacher(const RunConfig& cfg, const DatasetSplit& data) {
  cfg.validate();
  TrainResult r;
  r.model = init_mlp(cfg.teacher_arch(), cfg.teacher_sgd.seed);
  check_compatible(r.model, data.train, "teacher");
  const std::vector<std::vector<double>> none;
  auto objective = [&](std::size_t idx, const std::vector<double>& logits,
                       std::vector<double>& grad) {
    const LogitVector z(logits);
    grad = ce_gradient(z, data.train.labels[idx]);
    return cross_entropy_loss(z, data.train.labels[idx]);
  };
  auto on_eval = [&](std::size_t epoch) {
    r.metrics.push_back(evaluate_with(r.model, data.train, none, cfg.weights, cfg.ranking, epoch, Split::Train));
    r.metrics.push_back(evaluate_with(r.model, data.test, none, cfg.weights, cfg.ranking, epoch, Split::Test));
  };
  run_sgd(r.model, cfg.teacher_sgd, data.train, objective, cfg.eval_every, on_eval);
  return r;
}

TrainResult train_teacher(const RunConfig& cfg) {
  return train_teacher(cfg, generate_dataset(cfg.dataset));
}

TrainResult distill_student(const RunConfig& cfg, const MlpParams& teacher,
                            const DatasetSplit& data, const std::optional<MlpParams>& student_init) {
  cfg.validate();
  check_compatible(teacher, data.train, "teacher");
  TrainResult r;
  if (student_init) {
    if (student_init->specs() != cfg.student_arch()) {
      throw ConfigError("student initialization does not match the student architecture");
    }
    r.model = *student_init;
  } else {
    r.model = init_mlp(cfg.student_arch(), cfg.student_sgd.seed);
  }
  check_compatible(r.model, data.train, "student");

  // The teacher is frozen: its logits are computed once.
  const auto teacher_train = all_logits(teacher, data.train);
  const auto teacher_test = all_logits(teacher, data.test);
  std::vector<LogitVector> teacher_train_lv;
  teacher_train_lv.reserve(teacher_train.size());
  for (const auto& z : teacher_train) teacher_train_lv.emplace_back(z);

  auto objective = [&](std::size_t idx, const std::vector<double>& logits,
                       std::vector<double>& grad) {
    const LogitVector zs(logits);
    return combined_loss_and_gradient(teacher_train_lv[idx], zs, data.train.labels[idx],
                                      cfg.weights, cfg.ranking, grad)
        .total;
  };
  auto on_eval = [&](std::size_t epoch) {
    r.metrics.push_back(evaluate_with(r.model, data.train, teacher_train, cfg.weights, cfg.ranking, epoch, Split::Train));
    r.metrics.push_back(evaluate_with(r.model, data.test, teacher_test, cfg.weights, cfg.ranking, epoch, Split::Test));
  };
  run_sgd(r.model, cfg.student_sgd, data.train, objective, cfg.eval_every, on_eval);
  return r;
}

TrainResult distill_student(const RunConfig& cfg, const MlpParams& teacher) {
  return distill_student(cfg, teacher, generate_dataset(cfg.dataset));
}

// --- sweep ------------------------------------------------------------------

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "gamma") return SweepAxis::Gamma;
  if (s == "k") return SweepAxis::K;
  if (s == "temperature") return SweepAxis::Temperature;
  if (s == "subset") return SweepAxis::Subset;
  throw ConfigError("unknown sweep axis '" + s + "' (gamma|k|temperature|subset)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::K: return "k";
    case SweepAxis::Temperature: return "temperature";
    case SweepAxis::Subset: return "subset";
  }
  return "?";
}

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, double value) {
  RunConfig cfg = base;
  switch (axis) {
    case SweepAxis::Gamma: cfg.weights.gamma = value; break;
    case SweepAxis::K: cfg.ranking.steepness = value; break;
    case SweepAxis::Temperature: cfg.weights.temperature = value; break;
    case SweepAxis::Subset:
      if (value == 0.0) throw ConfigError("subset sweep value must be non-zero");
      cfg.ranking.subset = value > 0.0 ? ChannelSubset::top(value) : ChannelSubset::min(-value);
      break;
  }
  return cfg;
}

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

SweepError::SweepError(double v, const std::string& what)
    : Error(Kind::Config, "sweep value " + format_value(v) + " failed: " + what), value(v) {}

std::vector<SweepPoint> sweep(const RunConfig& base, SweepAxis axis,
                              const std::vector<double>& values, const MlpParams& teacher,
                              const DatasetSplit& data) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepPoint> points;
  for (double v : values) {
    SweepPoint p;
    p.value = v;
    try {
      const RunConfig cfg = apply_sweep_value(base, axis, v);
      p.metrics = distill_student(cfg, teacher, data).metrics;
    } catch (const Error& e) {
      throw SweepError(v, e.what());
    }
    const MetricsRow& last = final_test_row(p.metrics);
    p.final_accuracy = last.accuracy;
    p.final_mean_tau = last.mean_exact_tau;
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace rankkd
