#include "datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "container.hpp"

namespace nrib {

std::string mode_name(Mode m) { return m == Mode::kVector ? "vector" : "graph"; }

Mode mode_from_name(const std::string& s) {
  if (s == "vector") return Mode::kVector;
  if (s == "graph") return Mode::kGraph;
  throw std::invalid_argument("mode must be 'vector' or 'graph', got '" + s + "'");
}

Mat one_hot_rows(const std::vector<int64_t>& labels, int num_classes) {
  Mat m = Mat::Zero(static_cast<long>(labels.size()), num_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("class index out of range in one_hot_rows");
    }
    m(static_cast<long>(i), static_cast<long>(labels[i])) = 1.0;
  }
  return m;
}

Vec one_hot(int cls, int num_classes) {
  Vec v = Vec::Zero(num_classes);
  v[cls] = 1.0;
  return v;
}

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int j = 1; j < row.cols(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

void validate_label_rows(const Mat& labels, const std::string& what) {
  for (long i = 0; i < labels.rows(); ++i) {
    double s = labels.row(i).sum();
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::runtime_error(what + ": label row " + std::to_string(i) +
                               " does not sum to 1 (sum=" + std::to_string(s) + ")");
    }
    if ((labels.row(i).array() < 0.0).any()) {
      throw std::runtime_error(what + ": label row " + std::to_string(i) +
                               " has a negative entry");
    }
  }
}

void HyperParams::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (beta < 0) fail("beta must be >= 0");
  if (gamma < 0) fail("gamma must be >= 0");
  if (!(delta > 0 && delta <= 1)) fail("delta must be in (0,1]");
  if (!(lambda_smooth > 0)) fail("lambda_smooth must be > 0");
  if (!(tau > 0 && tau < 1)) fail("tau must be in (0,1)");
  if (ema_period < 1) fail("ema_period must be a positive integer");
  if (!(ema_rate >= 0 && ema_rate <= 1)) fail("ema_rate must be in [0,1]");
  if (!(conf_hi > 0 && conf_hi < 1)) fail("conf_hi must be in (0,1)");
  if (!(conf_lo > 0 && conf_lo < 1)) fail("conf_lo must be in (0,1)");
  if (!(conf_hi > 0.5)) fail("conf_hi must be greater than 0.5");
  if (!(conf_lo < 0.5)) fail("conf_lo must be less than 0.5");
  if (!(agree_threshold > 0 && agree_threshold < 1)) fail("agree_threshold must be in (0,1)");
  if (latent_dim < 1) fail("latent_dim must be a positive integer");
}

void PhaseSchedule::validate() const {
  if (epochs_warmup < 0 || epochs_injection < 0 || epochs_robust < 0) {
    throw std::invalid_argument("phase epoch counts must be non-negative");
  }
  if (epochs_warmup < 1) throw std::invalid_argument("epochs_warmup must be >= 1");
}

namespace {

const std::set<std::string> kConfigKeys = {
    "beta",       "gamma",    "delta",         "lambda_smooth",    "tau",
    "ema_period", "ema_rate", "conf_hi",       "conf_lo",          "agree_threshold",
    "latent_dim", "seed",     "epochs_warmup", "epochs_injection", "epochs_robust",
    "mode"};

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "' has non-numeric value '" + v + "'");
  }
  if (pos != v.size()) {
    throw std::invalid_argument("config key '" + key + "' has trailing characters in '" + v + "'");
  }
  return d;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long long d;
  try {
    d = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "' has non-integer value '" + v + "'");
  }
  if (pos != v.size()) {
    throw std::invalid_argument("config key '" + key + "' has trailing characters in '" + v + "'");
  }
  return d;
}

}  // namespace

Config parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " is not of the form 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (kConfigKeys.count(key) == 0) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
    if (kv.count(key)) {
      throw std::invalid_argument("duplicate config key '" + key + "'");
    }
    kv[key] = val;
  }

  Config cfg;
  auto getd = [&](const std::string& key, double& slot) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      cfg.meta.defaulted_keys.push_back(key);
      return;
    }
    slot = parse_double(key, it->second);
  };
  auto geti = [&](const std::string& key, int& slot) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      cfg.meta.defaulted_keys.push_back(key);
      return;
    }
    slot = static_cast<int>(parse_int(key, it->second));
  };

  getd("beta", cfg.hp.beta);
  getd("gamma", cfg.hp.gamma);
  getd("delta", cfg.hp.delta);
  getd("lambda_smooth", cfg.hp.lambda_smooth);
  getd("tau", cfg.hp.tau);
  geti("ema_period", cfg.hp.ema_period);
  getd("ema_rate", cfg.hp.ema_rate);
  getd("conf_hi", cfg.hp.conf_hi);
  getd("conf_lo", cfg.hp.conf_lo);
  getd("agree_threshold", cfg.hp.agree_threshold);
  geti("latent_dim", cfg.hp.latent_dim);
  geti("epochs_warmup", cfg.schedule.epochs_warmup);
  geti("epochs_injection", cfg.schedule.epochs_injection);
  geti("epochs_robust", cfg.schedule.epochs_robust);
  if (auto it = kv.find("seed"); it != kv.end()) {
    cfg.meta.seed = static_cast<uint64_t>(parse_int("seed", it->second));
  } else {
    cfg.meta.defaulted_keys.push_back("seed");
  }
  if (auto it = kv.find("mode"); it != kv.end()) {
    cfg.meta.mode = mode_from_name(it->second);
  } else {
    cfg.meta.defaulted_keys.push_back("mode");
  }

  cfg.hp.validate();
  cfg.schedule.validate();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file '" + path + "' not found");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const Config& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "beta = " << cfg.hp.beta << "\n";
  out << "gamma = " << cfg.hp.gamma << "\n";
  out << "delta = " << cfg.hp.delta << "\n";
  out << "lambda_smooth = " << cfg.hp.lambda_smooth << "\n";
  out << "tau = " << cfg.hp.tau << "\n";
  out << "ema_period = " << cfg.hp.ema_period << "\n";
  out << "ema_rate = " << cfg.hp.ema_rate << "\n";
  out << "conf_hi = " << cfg.hp.conf_hi << "\n";
  out << "conf_lo = " << cfg.hp.conf_lo << "\n";
  out << "agree_threshold = " << cfg.hp.agree_threshold << "\n";
  out << "latent_dim = " << cfg.hp.latent_dim << "\n";
  out << "epochs_warmup = " << cfg.schedule.epochs_warmup << "\n";
  out << "epochs_injection = " << cfg.schedule.epochs_injection << "\n";
  out << "epochs_robust = " << cfg.schedule.epochs_robust << "\n";
  out << "seed = " << cfg.meta.seed << "\n";
  out << "mode = " << mode_name(cfg.meta.mode) << "\n";
  return out.str();
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config to '" + path + "'");
  out << serialize_config(cfg);
}

// ---------------------------------------------------------------------------
// Dataset

namespace {
std::vector<int> mask_indices(const std::vector<uint8_t>& mask) {
  std::vector<int> idx;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) idx.push_back(static_cast<int>(i));
  }
  return idx;
}
}  // namespace

std::vector<int> Dataset::train_indices() const { return mask_indices(train_mask); }
std::vector<int> Dataset::val_indices() const { return mask_indices(val_mask); }
std::vector<int> Dataset::test_indices() const { return mask_indices(test_mask); }

std::vector<int> Dataset::split_indices(const std::string& split) const {
  if (split == "train") return train_indices();
  if (split == "val") return val_indices();
  if (split == "test") return test_indices();
  throw std::invalid_argument("split must be 'train', 'val' or 'test', got '" + split + "'");
}

void Dataset::validate() const {
  const long n = num_examples();
  if (num_classes < 1) throw std::runtime_error("dataset: num_classes must be >= 1");
  if (labels.rows() != n || labels.cols() != num_classes) {
    throw std::runtime_error("dataset: labels shape does not match features/num_classes");
  }
  validate_label_rows(labels, "dataset");
  auto check_len = [&](size_t len, const char* what) {
    if (len != static_cast<size_t>(n)) {
      throw std::runtime_error(std::string("dataset: ") + what + " length mismatch");
    }
  };
  check_len(hidden_true_labels.size(), "true_labels");
  check_len(hidden_noise_mask.size(), "noise_mask");
  check_len(train_mask.size(), "train mask");
  check_len(val_mask.size(), "val mask");
  check_len(test_mask.size(), "test mask");
  for (long i = 0; i < n; ++i) {
    int members = (train_mask[i] ? 1 : 0) + (val_mask[i] ? 1 : 0) + (test_mask[i] ? 1 : 0);
    if (members > 1) {
      throw std::runtime_error("dataset: split masks overlap at example " + std::to_string(i));
    }
  }
  if (box_min.size() != features.cols() || box_max.size() != features.cols()) {
    throw std::runtime_error("dataset: feature box dimension mismatch");
  }
  for (const auto& e : edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= n || e[1] >= n) {
      throw std::runtime_error("dataset: edge endpoint out of range");
    }
    if (e[0] >= e[1]) {
      throw std::runtime_error("dataset: edges must be stored with u < v (no self loops)");
    }
  }
  if (mode == Mode::kVector && !edges.empty()) {
    throw std::runtime_error("dataset: vector-mode dataset carries edges");
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  ArrayWriter w;
  w.add_f64("features", ds.features);
  w.add_f64("labels", ds.labels);
  w.add_i64("true_labels", ds.hidden_true_labels);
  w.add_u8("noise_mask", ds.hidden_noise_mask);
  std::vector<uint8_t> split;
  split.reserve(3 * ds.train_mask.size());
  split.insert(split.end(), ds.train_mask.begin(), ds.train_mask.end());
  split.insert(split.end(), ds.val_mask.begin(), ds.val_mask.end());
  split.insert(split.end(), ds.test_mask.begin(), ds.test_mask.end());
  w.add_u8("split_masks", split);
  if (ds.mode == Mode::kGraph) {
    std::vector<int64_t> flat;
    flat.reserve(ds.edges.size() * 2);
    for (const auto& e : ds.edges) {
      flat.push_back(e[0]);
      flat.push_back(e[1]);
    }
    w.add_i64("adjacency_indices", flat);
    w.add_f64("adjacency_values", Mat::Ones(static_cast<long>(ds.edges.size()), 1));
  }
  nlohmann::json meta;
  meta["kind"] = "dataset";
  meta["mode"] = mode_name(ds.mode);
  meta["num_classes"] = ds.num_classes;
  meta["box_min"] = std::vector<double>(ds.box_min.data(), ds.box_min.data() + ds.box_min.size());
  meta["box_max"] = std::vector<double>(ds.box_max.data(), ds.box_max.data() + ds.box_max.size());
  w.set_meta(meta);
  w.write(path);
}

Dataset load_dataset(const std::string& path) {
  ArrayReader r(path);
  if (r.meta().value("kind", "") != std::string("dataset")) {
    throw std::runtime_error("'" + path + "' is not a dataset container");
  }
  Dataset ds;
  ds.mode = mode_from_name(r.meta().at("mode").get<std::string>());
  ds.num_classes = r.meta().at("num_classes").get<int>();
  ds.features = r.f64("features");
  ds.labels = r.f64("labels");
  ds.hidden_true_labels = r.i64("true_labels");
  ds.hidden_noise_mask = r.u8("noise_mask");
  std::vector<uint8_t> split = r.u8("split_masks");
  const size_t n = static_cast<size_t>(ds.features.rows());
  if (split.size() != 3 * n) {
    throw std::runtime_error("dataset: split_masks array has wrong length");
  }
  ds.train_mask.assign(split.begin(), split.begin() + static_cast<long>(n));
  ds.val_mask.assign(split.begin() + static_cast<long>(n), split.begin() + static_cast<long>(2 * n));
  ds.test_mask.assign(split.begin() + static_cast<long>(2 * n), split.end());
  if (r.has("adjacency_indices")) {
    std::vector<int64_t> flat = r.i64("adjacency_indices");
    if (flat.size() % 2 != 0) throw std::runtime_error("dataset: adjacency_indices length odd");
    for (size_t i = 0; i < flat.size(); i += 2) {
      ds.edges.push_back({flat[i], flat[i + 1]});
    }
  }
  auto boxv = r.meta().at("box_min").get<std::vector<double>>();
  ds.box_min = Eigen::Map<Vec>(boxv.data(), static_cast<long>(boxv.size()));
  auto boxw = r.meta().at("box_max").get<std::vector<double>>();
  ds.box_max = Eigen::Map<Vec>(boxw.data(), static_cast<long>(boxw.size()));
  ds.validate();
  return ds;
}

}  // namespace nrib
