#pragma once

#include <cstdint>
#include <vector>

#include "datamodel.hpp"

namespace nrib::model {
struct TrainState;
}

namespace nrib::selector {

// Disjoint Clean/Noise/Uncertain partition over the train set. Vectors span
// the whole dataset; rows outside the train mask are false everywhere.
struct SelectionMasks {
  std::vector<uint8_t> clean, noise, uncertain;

  void validate(const Dataset& ds) const;
};

// Per-train-row selection statistics, aligned with `rows`.
struct SelectionScores {
  std::vector<int> rows;            // dataset indices of train examples
  std::vector<double> loss;         // per-sample CE of the S branch (MI proxy)
  std::vector<double> js;           // per-sample JS divergence between branches
  std::vector<double> confidence;   // max predicted probability of the S branch
  std::vector<int> observed_class;  // argmax of the observed label
};

SelectionScores compute_scores(model::TrainState& state, const Dataset& ds, uint64_t seed);

// The published ranking rule, driven by precomputed scores. Per observed
// class j with candidate pool I_j and cap
//   k_j = max(1, min(ceil(delta * |I_j|), floor(N/C))),
// clean candidates are the bottom-k_j by loss OR by JS, noise candidates the
// top-k_j by either; confidence >= conf_hi augments clean, <= conf_lo
// augments noise; rows claimed by both sides demote to uncertain.
SelectionMasks select_from_scores(const SelectionScores& scores, double delta,
                                  const HyperParams& hp, int num_classes, long num_examples);

SelectionMasks infojs_select(model::TrainState& state, const Dataset& ds, double delta,
                             const HyperParams& hp, uint64_t seed);

// Per-branch training targets: clean/noise rows keep observed labels,
// uncertain rows get the one-hot argmax of the matching branch prediction.
// probs_* rows align with scores.rows ordering inside the train set; here we
// take full N x C prediction matrices for simplicity.
struct BranchTargets {
  Mat targets_s, targets_t;  // N x C
};

BranchTargets assign_targets(const SelectionMasks& masks, const Dataset& ds, const Mat& probs_s,
                             const Mat& probs_t);

}  // namespace nrib::selector
