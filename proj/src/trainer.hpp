#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datamodel.hpp"
#include "model.hpp"
#include "selector.hpp"

namespace nrib::trainer {

enum class Phase { kWarmup, kInjection, kRobust };
std::string phase_name(Phase p);

enum class Variant { kFull, kNoKI, kNoRT, kBaseline };
Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

// One record per epoch. Selector-quality fields stay unset here; the
// harness fills them in (hidden ground truth is off limits in this module).
struct EpochRecord {
  int epoch = 0;
  Phase phase = Phase::kWarmup;
  double train_acc_s = 0, train_acc_t = 0;
  double test_acc_s = 0, test_acc_t = 0;
  double val_loss_s = 0, val_loss_t = 0;
  double js_mean = 0;
  std::map<std::string, double> loss_components;

  bool has_selection = false;
  selector::SelectionMasks masks;
  selector::SelectionScores scores;

  std::optional<double> clean_precision, clean_recall, noise_precision, noise_recall;
  std::optional<double> js_mean_clean, js_mean_noisy;
};

struct TrainResult {
  model::TrainState state;
  std::vector<EpochRecord> history;
};

// EMA refinement toward predictions every ema_period epochs (identity
// otherwise); rows stay on the simplex.
Mat refine_labels_vector(const Mat& labels, const Mat& predictions, double ema_rate, int epoch,
                         int ema_period);

// Confident predictions (max prob > tau) replace labels with one-hot argmax.
Mat refine_labels_graph(const Mat& labels, const Mat& predictions, double tau);

// Phase drivers. `working_labels` is the trainer's mutable copy of the
// observed labels (refinement target); the dataset itself is never modified.
void run_warmup(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                std::vector<EpochRecord>& history);
void run_injection(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                   std::vector<EpochRecord>& history);
void run_robust(model::TrainState& state, const Dataset& ds, Mat& working_labels,
                std::vector<EpochRecord>& history);

TrainResult train(const Dataset& ds, const Config& config, Variant variant = Variant::kFull);

// Desk-scale optimizer settings (momentum SGD for vector mode, Adam for
// graph mode).
struct OptimizerSettings {
  double lr = 0.005;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool adam = false;
};
OptimizerSettings optimizer_settings(Mode mode);

void apply_step(const OptimizerSettings& opt, model::OptimizerState& state,
                const std::vector<std::pair<std::string, Mat*>>& params,
                const std::vector<Mat>& grads);

}  // namespace nrib::trainer
