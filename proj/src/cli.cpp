#include "rankkd/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rankkd/config.hpp"
#include "rankkd/distill.hpp"
#include "rankkd/error.hpp"

namespace rankkd {

namespace {

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<double> read_vector_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  std::string text = ss.str();
  for (char& c : text) {
    if (c == ',' || c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  std::vector<double> out;
  std::istringstream items(text);
  std::string item;
  while (items >> item) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw InputError(path + ": bad number '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw InputError("bad sweep value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw InputError("--values is empty");
  return out;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::Training: return kExitDivergence;
    case Error::Kind::Checkpoint: return kExitCheckpoint;
    default: return kExitInput;
  }
}

DatasetSplit load_data(const RunConfig& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return generate_dataset(cfg.dataset);
  DatasetSplit d;
  d.train = read_dataset_csv(std::filesystem::path(data_dir) / "train.csv");
  d.test = read_dataset_csv(std::filesystem::path(data_dir) / "test.csv");
  // Label count from the config; files may not contain every class.
  d.train.num_classes = d.test.num_classes = cfg.dataset.num_classes;
  if (d.train.input_dim != cfg.dataset.input_dim || d.test.input_dim != cfg.dataset.input_dim) {
    throw ConfigError("dataset files in " + data_dir + " do not match dataset.input_dim");
  }
  for (const Dataset* ds : {&d.train, &d.test}) {
    for (auto y : ds->labels) {
      if (y >= cfg.dataset.num_classes) throw ConfigError("label out of range in " + data_dir);
    }
  }
  return d;
}

MlpParams load_teacher(const std::string& path, const DatasetSplit& data) {
  MlpParams teacher = load_checkpoint(path);
  try {
    check_compatible(teacher, data.train, "teacher checkpoint " + path);
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  return teacher;
}

std::filesystem::path metrics_path_for(const std::string& ckpt) { return ckpt + ".metrics.csv"; }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kendall's-tau ranking loss for logit distillation: losses, gradients and a desk-scale harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, teacher_path, spec_path, data_dir;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Write train.csv/test.csv for the [dataset] section");
  gen->add_option("--spec", spec_path, "Config file with a [dataset] section")->required();
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--seed", seed, "Override dataset.seed");

  auto* teach = app.add_subcommand("train-teacher", "Train the teacher with cross-entropy");
  teach->add_option("--config", config_path, "Run config")->required();
  teach->add_option("--out", out_path, "Teacher checkpoint path")->required();
  teach->add_option("--data", data_dir, "Directory with train.csv/test.csv (default: generate)");
  teach->add_option("--seed", seed, "Override teacher.seed");

  bool no_rank = false, no_norm = false;
  auto* dist = app.add_subcommand("distill", "Distill a student from a frozen teacher");
  dist->add_option("--config", config_path, "Run config")->required();
  dist->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  dist->add_option("--out", out_path, "Student checkpoint path")->required();
  dist->add_option("--data", data_dir, "Directory with train.csv/test.csv (default: generate)");
  dist->add_option("--seed", seed, "Override student.seed");
  dist->add_flag("--no-rank", no_rank, "Force gamma = 0 (plain KD baseline)");
  dist->add_flag("--no-norm", no_norm, "Disable z-score normalization inside the ranking loss");

  std::string t_logits, s_logits, form = "symmetric";
  double k = 1.0, temperature = 4.0;
  bool profile_no_norm = false;
  auto* prof = app.add_subcommand("grad-profile", "Per-channel |KL| and |ranking| gradient magnitudes");
  prof->add_option("--teacher-logits", t_logits, "Comma-separated teacher logits")->required();
  prof->add_option("--student-logits", s_logits, "Comma-separated student logits")->required();
  prof->add_option("--k", k, "Steepness")->capture_default_str();
  prof->add_option("--T", temperature, "Temperature")->capture_default_str();
  prof->add_option("--form", form, "symmetric|form1|form2|form3")->capture_default_str();
  prof->add_flag("--no-norm", profile_no_norm, "Disable z-score normalization");

  std::string a_path, b_path;
  std::optional<double> tau_k;
  auto* tau = app.add_subcommand("tau", "Exact Kendall tau (and tanh-smoothed tau with --k)");
  tau->add_option("--a", a_path, "First comma-separated vector")->required();
  tau->add_option("--b", b_path, "Second comma-separated vector")->required();
  tau->add_option("--k", tau_k, "Steepness for the smoothed tau");

  std::string axis_name, values_list;
  auto* sw = app.add_subcommand("sweep", "Distill once per value of one hyper-parameter");
  sw->add_option("--config", config_path, "Run config")->required();
  sw->add_option("--axis", axis_name, "gamma|k|temperature|subset")->required();
  sw->add_option("--values", values_list, "Comma-separated values (subset: +p top, -p min)")->required();
  sw->add_option("--out", out_path, "Output directory")->required();
  sw->add_option("--teacher", teacher_path, "Teacher checkpoint (default: train one)");
  sw->add_option("--data", data_dir, "Directory with train.csv/test.csv (default: generate)");
  sw->add_option("--seed", seed, "Override student.seed");

  auto* pc = app.add_subcommand("print-config", "Print the canonical form of a config");
  pc->add_option("--config", config_path, "Config file (default: built-in defaults)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen) {
      RunConfig cfg = load_config(spec_path);
      if (seed) cfg.dataset.seed = *seed;
      const auto data = generate_dataset(cfg.dataset);
      std::filesystem::create_directories(out_path);
      write_dataset_csv(data.train, std::filesystem::path(out_path) / "train.csv");
      write_dataset_csv(data.test, std::filesystem::path(out_path) / "test.csv");
      out << "wrote " << data.train.size() << " train and " << data.test.size()
          << " test rows to " << out_path << '\n';
      return kExitOk;
    }

    if (*teach) {
      RunConfig cfg = load_config(config_path);
      if (seed) cfg.teacher_sgd.seed = *seed;
      const auto data = load_data(cfg, data_dir);
      const auto r = train_teacher(cfg, data);
      save_checkpoint(r.model, out_path);
      write_metrics_csv(r.metrics, metrics_path_for(out_path));
      out << "final test accuracy: " << fmt9(final_test_row(r.metrics).accuracy) << '\n';
      return kExitOk;
    }

    if (*dist) {
      RunConfig cfg = load_config(config_path);
      if (seed) cfg.student_sgd.seed = *seed;
      if (no_rank) cfg.weights.gamma = 0.0;
      if (no_norm) cfg.ranking.normalize_inputs = false;
      const auto data = load_data(cfg, data_dir);
      const auto teacher = load_teacher(teacher_path, data);
      const auto r = distill_student(cfg, teacher, data);
      save_checkpoint(r.model, out_path);
      write_metrics_csv(r.metrics, metrics_path_for(out_path));
      const auto& last = final_test_row(r.metrics);
      out << "final test accuracy: " << fmt9(last.accuracy)
          << "  mean exact tau: " << fmt9(last.mean_exact_tau) << '\n';
      return kExitOk;
    }

    if (*prof) {
      const auto zt_raw = read_vector_file(t_logits);
      const auto zs_raw = read_vector_file(s_logits);
      if (zt_raw.size() != zs_raw.size()) {
        throw ShapeError("teacher has " + std::to_string(zt_raw.size()) + " logits, student " +
                         std::to_string(zs_raw.size()));
      }
      LossWeights w;
      w.temperature = temperature;
      RankingConfig rc;
      rc.steepness = k;
      rc.form = parse_ranking_form(form);
      rc.normalize_inputs = !profile_no_norm;
      const auto rows = gradient_profile(LogitVector(zt_raw), LogitVector(zs_raw), w, rc);
      out << "channel,q_t,abs_kl_grad,abs_rk_grad\n";
      for (const auto& r : rows) {
        out << r.channel << ',' << fmt9(r.q_t) << ',' << fmt9(r.abs_kl_grad) << ','
            << fmt9(r.abs_rk_grad) << '\n';
      }
      return kExitOk;
    }

    if (*tau) {
      const auto a = read_vector_file(a_path);
      const auto b = read_vector_file(b_path);
      if (a.size() != b.size()) {
        throw ShapeError("vectors have different lengths (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
      }
      const LogitVector va(a), vb(b);
      const auto kb = kendall_tau_exact(va, vb);
      out << "tau,concordant,discordant,ties" << (tau_k ? ",tau_d" : "") << '\n';
      out << fmt9(kb.tau) << ',' << kb.concordant << ',' << kb.discordant << ',' << kb.ties;
      if (tau_k) out << ',' << fmt9(diff_kendall_tau(va, vb, *tau_k));
      out << '\n';
      return kExitOk;
    }

    if (*sw) {
      RunConfig cfg = load_config(config_path);
      if (seed) cfg.student_sgd.seed = *seed;
      const SweepAxis axis = parse_sweep_axis(axis_name);
      const auto values = parse_values(values_list);
      const auto data = load_data(cfg, data_dir);
      const MlpParams teacher =
          teacher_path.empty() ? train_teacher(cfg, data).model : load_teacher(teacher_path, data);
      std::vector<SweepPoint> points;
      try {
        points = sweep(cfg, axis, values, teacher, data);
      } catch (const SweepError& e) {
        err << "error: " << e.what() << '\n';
        return kExitSweep;
      }
      const std::filesystem::path dir(out_path);
      std::filesystem::create_directories(dir);
      std::string summary = "value,final_accuracy,final_mean_tau\n";
      for (const auto& p : points) {
        char name[64];
        std::snprintf(name, sizeof(name), "metrics_%s_%g.csv", to_string(axis).c_str(), p.value);
        write_metrics_csv(p.metrics, dir / name);
        summary += fmt9(p.value) + ',' + fmt9(p.final_accuracy) + ',' + fmt9(p.final_mean_tau) + '\n';
      }
      {
        std::ofstream os(dir / "summary.csv.tmp", std::ios::binary | std::ios::trunc);
        os << summary;
        if (!os.flush()) throw InputError("failed writing summary in " + out_path);
      }
      std::filesystem::rename(dir / "summary.csv.tmp", dir / "summary.csv");
      out << summary;
      return kExitOk;
    }

    if (*pc) {
      const RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
      out << print_config(cfg);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace rankkd
