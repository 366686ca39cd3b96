#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "autodiff.hpp"
#include "datamodel.hpp"
#include "infomath.hpp"

namespace nrib::model {

using nrib::Mat;
using nrib::Vec;

struct ModelConfig {
  Mode mode = Mode::kVector;
  int input_dim = 0;
  int num_classes = 0;
  int latent_dim = 16;
  int hidden_dim = 64;          // 64 for vector mode, 16 is the graph default
  int mixture_components = 4;   // graph-mode latent prior
};

struct DenseBackbone {
  Mat w1, b1, w2, b2;
};

struct GatBackbone {
  // Two attention layers; a_src/a_dst decompose the usual concat-attention
  // vector so per-edge scores are two gathers and an add.
  Mat l1_w, l1_a_src, l1_a_dst;
  Mat l2_w, l2_a_src, l2_a_dst;
};

struct Encoder {
  std::variant<DenseBackbone, GatBackbone> backbone;
  Mat mean_w, mean_b, logvar_w, logvar_b;
};

struct Decoder {
  Mat w, b;
};

struct Discriminator {
  Mat w1, b1, w2, b2, w3, b3;
};

struct GaussMixture {
  Mat weight_logits;  // 1 x m
  Mat means;          // m x k
  Mat logvars;        // m x k
};

// Per-parameter optimizer slots, keyed by the parameter's registered name.
struct OptimizerState {
  std::map<std::string, Mat> slot_a;  // SGD velocity / Adam first moment
  std::map<std::string, Mat> slot_b;  // Adam second moment
  long step_count = 0;
};

struct TrainState {
  ModelConfig cfg;
  HyperParams hp;
  PhaseSchedule schedule;
  Encoder enc_s, enc_t;
  Decoder decoder;
  Discriminator disc;
  GaussMixture mix_s, mix_t;  // used in graph mode only
  OptimizerState opt_q, opt_d;
  int epoch = 0;
  uint64_t seed = 0;
};

TrainState init_train_state(const ModelConfig& cfg, const HyperParams& hp,
                            const PhaseSchedule& schedule, uint64_t seed);

// Named views over every parameter matrix; drives optimizers, checkpoints
// and the structural no-aliasing assertion.
std::vector<std::pair<std::string, Mat*>> param_entries(TrainState& state);
std::vector<std::pair<std::string, const Mat*>> param_entries(const TrainState& state);
std::vector<std::pair<std::string, Mat*>> encoder_params(Encoder& e, const std::string& prefix);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Tape-side forward passes

// Trainable parameter binding for one forward pass. `frozen` binds values as
// constants so no gradient reaches them.
struct Bound {
  ad::Graph* g = nullptr;
  std::vector<std::pair<Mat*, ad::Var>> entries;

  ad::Var bind(Mat& m, bool frozen) {
    ad::Var v = frozen ? g->constant(m) : g->input(m);
    if (!frozen) entries.push_back({&m, v});
    return v;
  }
};

struct EncVars {
  ad::Var mean, logvar;
  ad::Var sample;  // mean when eps == nullptr (eval mode)
};

struct GatLayerStats {
  ad::Var phi;  // E x 1 attention probabilities
};

struct GraphTopology {
  // Directed edge list including both directions and self loops, used by
  // the attention layers. `dst` doubles as the softmax segment id.
  std::vector<int> src, dst;
  int num_nodes = 0;
};

GraphTopology build_topology(const Dataset& ds);

// Dense (vector-mode) branch forward. `eps` is an N x k standard-normal
// draw; nullptr selects eval mode (sample = mean).
EncVars encode_dense(ad::Graph& g, Bound& bound, Encoder& enc, ad::Var x, const Mat* eps,
                     bool frozen);

// GAT (graph-mode) branch forward over all nodes.
EncVars encode_gat(ad::Graph& g, Bound& bound, Encoder& enc, ad::Var x,
                   const GraphTopology& topo, const Mat* eps, bool frozen,
                   std::vector<GatLayerStats>* stats);

ad::Var decode_logits(ad::Graph& g, Bound& bound, Decoder& dec, ad::Var z, bool frozen);

// Probability that a (latent, label) pair comes from the joint distribution.
// Pre-activation is clamped to +-15, bounding the output away from {0,1}.
ad::Var discriminate_probs(ad::Graph& g, Bound& bound, Discriminator& d, ad::Var s, ad::Var y,
                           ad::Var t, ad::Var yp, bool frozen);

// ---------------------------------------------------------------------------
// Plain-value conveniences (eval-mode or seeded train-mode forward)

struct DualEncoding {
  Mat mean_s, logvar_s, sample_s;
  Mat mean_t, logvar_t, sample_t;

  infomath::DiagonalGaussian s_dist(long row) const;
  infomath::DiagonalGaussian t_dist(long row) const;
};

// Encodes `rows` of the dataset (vector mode) or all nodes then gathers
// `rows` (graph mode). Train mode draws reparameterized samples from the
// seed; eval mode returns means as samples.
DualEncoding encode(TrainState& state, const Dataset& ds, const std::vector<int>& rows,
                    bool train_mode, uint64_t draw_seed);

Mat decode_probs(TrainState& state, const Mat& latents);
double discriminate(TrainState& state, const Vec& s, const Vec& y, const Vec& t, const Vec& yp);

// Eval-mode class probabilities for each requested row, per branch.
struct BranchProbs {
  Mat probs_s, probs_t;
};
BranchProbs predict(TrainState& state, const Dataset& ds, const std::vector<int>& rows);

Mat gaussian_eps(int rows, int cols, uint64_t seed);

}  // namespace nrib::model
