#include "rankkd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rankkd/error.hpp"

namespace rankkd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int to_uint(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint<std::size_t>(key, trim(item)));
  return out;
}

void set_sgd(SgdConfig& sgd, std::vector<std::size_t>& hidden, const std::string& name,
             const std::string& full, const std::string& v) {
  if (name == "hidden") hidden = to_list(full, v);
  else if (name == "seed") sgd.seed = to_uint<std::uint64_t>(full, v);
  else if (name == "lr") sgd.learning_rate = to_double(full, v);
  else if (name == "momentum") sgd.momentum = to_double(full, v);
  else if (name == "weight_decay") sgd.weight_decay = to_double(full, v);
  else if (name == "epochs") sgd.epochs = to_uint<std::size_t>(full, v);
  else if (name == "batch_size") sgd.batch_size = to_uint<std::size_t>(full, v);
  else throw ConfigError("unknown config key '" + full + "'");
}

void set_key(RunConfig& c, const std::string& section, const std::string& name,
             const std::string& v) {
  const std::string full = section + "." + name;
  if (section == "dataset") {
    auto& d = c.dataset;
    if (name == "num_classes") d.num_classes = to_uint<std::size_t>(full, v);
    else if (name == "input_dim") d.input_dim = to_uint<std::size_t>(full, v);
    else if (name == "samples_per_class") d.samples_per_class = to_uint<std::size_t>(full, v);
    else if (name == "cluster_spread") d.cluster_spread = to_double(full, v);
    else if (name == "inter_class_correlation") d.inter_class_correlation = to_double(full, v);
    else if (name == "seed") d.seed = to_uint<std::uint64_t>(full, v);
    else throw ConfigError("unknown config key '" + full + "'");
  } else if (section == "teacher") {
    set_sgd(c.teacher_sgd, c.teacher_hidden, name, full, v);
  } else if (section == "student") {
    set_sgd(c.student_sgd, c.student_hidden, name, full, v);
  } else if (section == "weights") {
    auto& w = c.weights;
    if (name == "alpha") w.alpha = to_double(full, v);
    else if (name == "beta") w.beta = to_double(full, v);
    else if (name == "gamma") w.gamma = to_double(full, v);
    else if (name == "temperature") w.temperature = to_double(full, v);
    else if (name == "kl_scale_t2") w.kl_scale_t2 = to_bool(full, v);
    else throw ConfigError("unknown config key '" + full + "'");
  } else if (section == "ranking") {
    auto& r = c.ranking;
    if (name == "k") r.steepness = to_double(full, v);
    else if (name == "form") r.form = parse_ranking_form(v);
    else if (name == "subset") r.subset = parse_channel_subset(v);
    else if (name == "normalize") r.normalize_inputs = to_bool(full, v);
    else if (name == "eps") r.normalize_eps = to_double(full, v);
    else throw ConfigError("unknown config key '" + full + "'");
  } else if (section == "optimizer") {
    if (name == "eval_every") c.eval_every = to_uint<std::size_t>(full, v);
    else throw ConfigError("unknown config key '" + full + "'");
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
}

std::string num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

std::string list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void print_model(std::ostringstream& os, const char* name, const std::vector<std::size_t>& hidden,
                 const SgdConfig& s) {
  os << '[' << name << "]\n"
     << "hidden = " << list(hidden) << '\n'
     << "seed = " << s.seed << '\n'
     << "lr = " << num(s.learning_rate) << '\n'
     << "momentum = " << num(s.momentum) << '\n'
     << "weight_decay = " << num(s.weight_decay) << '\n'
     << "epochs = " << s.epochs << '\n'
     << "batch_size = " << s.batch_size << "\n\n";
}

bool same_sgd(const SgdConfig& a, const SgdConfig& b) {
  return a.learning_rate == b.learning_rate && a.momentum == b.momentum &&
         a.weight_decay == b.weight_decay && a.epochs == b.epochs &&
         a.batch_size == b.batch_size && a.seed == b.seed;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "teacher" && section != "student" &&
          section != "weights" && section != "ranking" && section != "optimizer") {
        throw ConfigError("unknown config section '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) throw ConfigError("config key '" + key + "' appears before any section");
    set_key(c, section, key, trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string print_config(const RunConfig& c) {
  std::ostringstream os;
  const auto& d = c.dataset;
  os << "[dataset]\n"
     << "num_classes = " << d.num_classes << '\n'
     << "input_dim = " << d.input_dim << '\n'
     << "samples_per_class = " << d.samples_per_class << '\n'
     << "cluster_spread = " << num(d.cluster_spread) << '\n'
     << "inter_class_correlation = " << num(d.inter_class_correlation) << '\n'
     << "seed = " << d.seed << "\n\n";
  print_model(os, "teacher", c.teacher_hidden, c.teacher_sgd);
  print_model(os, "student", c.student_hidden, c.student_sgd);
  const auto& w = c.weights;
  os << "[weights]\n"
     << "alpha = " << num(w.alpha) << '\n'
     << "beta = " << num(w.beta) << '\n'
     << "gamma = " << num(w.gamma) << '\n'
     << "temperature = " << num(w.temperature) << '\n'
     << "kl_scale_t2 = " << (w.kl_scale_t2 ? "true" : "false") << "\n\n";
  const auto& r = c.ranking;
  os << "[ranking]\n"
     << "k = " << num(r.steepness) << '\n'
     << "form = " << to_string(r.form) << '\n'
     << "subset = " << to_string(r.subset) << '\n'
     << "normalize = " << (r.normalize_inputs ? "true" : "false") << '\n'
     << "eps = " << num(r.normalize_eps) << "\n\n";
  os << "[optimizer]\n"
     << "eval_every = " << c.eval_every << '\n';
  return os.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  const auto& da = a.dataset;
  const auto& db = b.dataset;
  return da.num_classes == db.num_classes && da.input_dim == db.input_dim &&
         da.samples_per_class == db.samples_per_class && da.cluster_spread == db.cluster_spread &&
         da.inter_class_correlation == db.inter_class_correlation && da.seed == db.seed &&
         a.teacher_hidden == b.teacher_hidden && a.student_hidden == b.student_hidden &&
         same_sgd(a.teacher_sgd, b.teacher_sgd) && same_sgd(a.student_sgd, b.student_sgd) &&
         a.weights.alpha == b.weights.alpha && a.weights.beta == b.weights.beta &&
         a.weights.gamma == b.weights.gamma && a.weights.temperature == b.weights.temperature &&
         a.weights.kl_scale_t2 == b.weights.kl_scale_t2 &&
         a.ranking.steepness == b.ranking.steepness && a.ranking.form == b.ranking.form &&
         a.ranking.subset.kind == b.ranking.subset.kind &&
         a.ranking.subset.percent == b.ranking.subset.percent &&
         a.ranking.normalize_inputs == b.ranking.normalize_inputs &&
         a.ranking.normalize_eps == b.ranking.normalize_eps && a.eval_every == b.eval_every;
}

}  // namespace rankkd
