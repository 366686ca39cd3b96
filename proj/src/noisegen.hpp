#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "datamodel.hpp"

namespace nrib::model {
struct TrainState;
}

namespace nrib::noisegen {

struct TransitionMatrix {
  Mat matrix;        // C x C, row-stochastic
  std::string kind;  // "symmetric" | "pair"
  double rate = 0.0;

  int num_classes() const { return static_cast<int>(matrix.rows()); }
  void validate() const;
};

// symmetric: diagonal 1-rate, off-diagonal rate/(C-1).
// pair:      diagonal 1-rate, entry (i, (i+1) mod C) = rate.
TransitionMatrix build_transition_matrix(const std::string& kind, double rate, int num_classes);

// Resamples every train label from the matrix row of its true label and
// fills the hidden noise mask. Validation/test labels stay untouched.
// Deterministic given the seed; each example gets its own derived stream.
void inject_noise(Dataset& ds, const TransitionMatrix& tm, uint64_t seed);

// Single-step sign-gradient attack through the eval-mode mean latent of the
// clean (S) branch, using observed labels. Returns perturbed features for
// `rows`, clipped into the dataset's feature box.
Mat fgsm_perturb(model::TrainState& state, const Dataset& ds, const std::vector<int>& rows,
                 double epsilon);

}  // namespace nrib::noisegen
