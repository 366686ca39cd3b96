#pragma once

#include <vector>

#include "autodiff.hpp"
#include "datamodel.hpp"

namespace nrib::losses {

// Batch-aligned latent variables for both branches.
struct EncodingVars {
  ad::Var mean_s, logvar_s, sample_s;
  ad::Var mean_t, logvar_t, sample_t;
};

// Per-sample cross entropy -sum_c y_c log max(p_c, 1e-12), an N x 1 column.
ad::Var per_sample_ce(ad::Graph& g, ad::Var probs, const Mat& targets);

// Mean cross entropy of the clean branch over the batch.
ad::Var warmup_loss(ad::Graph& g, ad::Var probs_s, const Mat& targets);

// Per-sample Monte-Carlo JS divergence between the two branch Gaussians,
// sharing one draw plan across the batch; clamped into [0, log 2].
ad::Var js_per_sample(ad::Graph& g, ad::Var mean1, ad::Var logvar1, ad::Var mean2,
                      ad::Var logvar2, const Mat& plan);

// Mean over the batch of KL(s||N(0,I)) + KL(t||N(0,I)).
ad::Var minimal_loss_vector(ad::Graph& g, const EncodingVars& enc);

// One branch's graph compression statistics: attention probabilities per
// configured layer (the Bernoulli edge model) and the final latent with its
// Gaussian-mixture prior.
struct GraphMinimalInputs {
  std::vector<ad::Var> phi;  // E x 1 edge probabilities per layer in S_A
  double alpha = 0.5;        // Bernoulli prior
  ad::Var z, mean, logvar;   // per-node latent sample and posterior
  ad::Var mix_weight_logits, mix_means, mix_logvars;
};

ad::Var minimal_loss_graph(ad::Graph& g, const GraphMinimalInputs& in);

// Selection-set portions of one batch, as 0/1 column constants plus targets.
struct InjectionBatch {
  Mat clean_mask, noise_mask, uncertain_mask;  // B x 1
  Mat targets_s, targets_t;                    // B x C
};

// Eq-style sum of set-wise means (clean: CE_S - JS; noise: CE_T - JS;
// uncertain: CE_S + CE_T + JS) plus beta times the minimal term. Empty sets
// contribute zero; all three empty is an error.
ad::Var injection_loss(ad::Graph& g, const EncodingVars& enc, ad::Var probs_s, ad::Var probs_t,
                       const InjectionBatch& batch, const HyperParams& hp, const Mat& js_plan,
                       Mode mode, const GraphMinimalInputs* gmin_s,
                       const GraphMinimalInputs* gmin_t);

// Smooth-min consistency loss (node classification).
ad::Var conce_graph(ad::Graph& g, ad::Var probs_s, ad::Var probs_t, const Mat& targets,
                    double lambda_smooth);

// Masked label-swap consistency loss (image classification). Per-sample
// losses and argmaxes used for the masks are taken from detached values.
ad::Var conce_image(ad::Graph& g, ad::Var probs_s, ad::Var probs_t, const Mat& targets,
                    double agree_threshold);

// ConCE + beta * Minimal - gamma * mean log d(s,y;t,y), with the
// discriminator frozen. `disc_probs` must be the discriminator output on the
// positive pairs, built from constant-bound discriminator parameters.
ad::Var robust_loss(ad::Graph& g, const EncodingVars& enc, ad::Var probs_s, ad::Var probs_t,
                    const Mat& targets, ad::Var disc_probs_pos, const HyperParams& hp, Mode mode,
                    const GraphMinimalInputs* gmin_s, const GraphMinimalInputs* gmin_t);

// Mean of -log(1 - d(neg)) - log d(pos) where negatives pair each sample
// with a seeded fixed-point-free cyclic shift of the T branch.
ad::Var discriminator_loss(ad::Graph& g, ad::Var disc_probs_pos, ad::Var disc_probs_neg);

// Cyclic-shift offset in [1, batch-1] derived from the seed.
int permutation_shift(long batch, uint64_t seed);

}  // namespace nrib::losses
