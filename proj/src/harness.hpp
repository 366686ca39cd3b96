#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "datamodel.hpp"
#include "trainer.hpp"

namespace nrib::harness {

// Gaussian clusters with unit covariance on a regular-simplex layout,
// balanced classes, stratified 60/20/20 split.
Dataset generate_blobs(int num_classes, int dim, int n, double separation, uint64_t seed);

// Stochastic-block-model graph with community-mean Gaussian features,
// 20 train nodes per class, a 500-capped validation split, remainder test.
Dataset generate_sbm_graph(int num_communities, int nodes_per_community, double p_in,
                           double p_out, int feature_dim, uint64_t seed);

struct EvalResult {
  double acc_s = 0, acc_t = 0;
  double acc_report = 0;           // branch with the lower validation loss
  std::string report_branch = "s";
};

EvalResult evaluate(model::TrainState& state, const Dataset& ds, const std::string& split);

struct SelectorQuality {
  std::optional<double> clean_precision, clean_recall;
  std::optional<double> noise_precision, noise_recall;
};

SelectorQuality selector_quality(const selector::SelectionMasks& masks, const Dataset& ds);

// Fills selector precision/recall and clean/noisy JS means into injection
// records (the only code path that reads the hidden ground truth).
void enrich_history(std::vector<trainer::EpochRecord>& history, const Dataset& ds);

// Hidden-mask statistics surfaced for dataset info reporting.
struct NoiseStats {
  long train_examples = 0;
  long noisy_train_examples = 0;
  double noise_rate = 0;
};
NoiseStats dataset_noise_stats(const Dataset& ds);

// Metric-record (de)serialization: one self-delimiting JSON record per line.
nlohmann::json record_to_json(const trainer::EpochRecord& rec);
trainer::EpochRecord record_from_json(const nlohmann::json& j);
void write_history(const std::vector<trainer::EpochRecord>& history, const std::string& path);
std::vector<trainer::EpochRecord> read_history(const std::string& path);
void write_selection_dump(const std::vector<trainer::EpochRecord>& history,
                          const std::string& path);

// FGSM sweep: accuracy of the clean branch on the perturbed test split.
struct AttackPoint {
  double epsilon = 0;
  double accuracy = 0;
};
std::vector<AttackPoint> attack_eval(model::TrainState& state, const Dataset& ds,
                                     const std::vector<double>& epsilons);

struct ExperimentSpec {
  std::string data_kind = "blobs";  // "blobs" | "sbm"
  int num_classes = 4;
  int dim = 8;
  int n = 2000;
  double separation = 4.5;
  int communities = 4;
  int nodes_per_community = 100;
  double p_in = 0.1, p_out = 0.01;
  std::string noise_kind = "symmetric";
  double noise_rate = 0.4;
  int seeds = 5;
  bool ablations = false;
  std::vector<double> fgsm_epsilons;  // empty disables the sweep
};

// Multi-seed benchmark: full pipeline vs the single-encoder CE baseline
// (plus ablations / FGSM sweep when requested). Rows report mean, std and
// per-seed accuracies.
nlohmann::json run_experiment(const Config& config, const ExperimentSpec& spec);

// Deterministic SVG plots: accuracy-vs-epoch with phase boundaries, loss
// components, selector precision/recall.
void emit_plots(const std::vector<trainer::EpochRecord>& history, const PhaseSchedule& schedule,
                const std::string& out_dir);

// Bound-verification suite (the discrete brute-force oracle). Each record
// carries the minimum observed slack over `trials` random joints.
struct BoundCheck {
  std::string name;
  double min_slack = 0;
  int trials = 0;
  bool pass = false;
};
std::vector<BoundCheck> verify_bounds(int trials, uint64_t seed);

}  // namespace nrib::harness
