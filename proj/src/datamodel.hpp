#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace nrib {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Mode { kVector, kGraph };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

// Rows of label matrices are probability vectors; hard labels are one-hot.
Mat one_hot_rows(const std::vector<int64_t>& labels, int num_classes);
Vec one_hot(int cls, int num_classes);
int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);
void validate_label_rows(const Mat& labels, const std::string& what);

struct HyperParams {
  double beta = 1e-5;         // compression weight
  double gamma = 0.001;       // disentanglement weight
  double delta = 0.1;         // selection ratio
  double lambda_smooth = 5.0; // smooth-min sharpness
  double tau = 0.97;          // graph confidence threshold
  int ema_period = 1;
  double ema_rate = 0.3;
  double conf_hi = 0.95;
  double conf_lo = 0.3;
  double agree_threshold = 0.5;
  int latent_dim = 16;

  void validate() const;  // throws naming the violated constraint
};

struct PhaseSchedule {
  int epochs_warmup = 20;
  int epochs_injection = 30;
  int epochs_robust = 50;

  int total() const { return epochs_warmup + epochs_injection + epochs_robust; }
  void validate() const;
};

struct RunMeta {
  uint64_t seed = 1;
  Mode mode = Mode::kVector;
  std::vector<std::string> defaulted_keys;  // keys absent from the file
};

struct Config {
  HyperParams hp;
  PhaseSchedule schedule;
  RunMeta meta;
};

// Flat `key = value` text with `#` comments. Unknown keys are rejected;
// omitted keys take defaults and are echoed in RunMeta::defaulted_keys.
Config load_config(const std::string& path);
Config parse_config_text(const std::string& text);
std::string serialize_config(const Config& cfg);
void save_config(const Config& cfg, const std::string& path);

// One container type covers both tasks; graph mode adds an edge list.
// `hidden_*` fields exist for evaluation only and must never be read by
// training code paths (enforced by a source audit in the test suite).
struct Dataset {
  Mode mode = Mode::kVector;
  int num_classes = 0;
  Mat features;  // N x d
  Mat labels;    // N x C observed labels, row-stochastic

  std::vector<int64_t> hidden_true_labels;
  std::vector<uint8_t> hidden_noise_mask;

  std::vector<uint8_t> train_mask, val_mask, test_mask;
  std::vector<std::array<int64_t, 2>> edges;  // undirected, u < v, no self loops

  Vec box_min, box_max;  // feature box, d-dim

  long num_examples() const { return features.rows(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  std::vector<int> train_indices() const;
  std::vector<int> val_indices() const;
  std::vector<int> test_indices() const;
  std::vector<int> split_indices(const std::string& split) const;  // "train"|"val"|"test"

  void validate() const;
};

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace nrib
