#include "selector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "infomath.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace nrib::selector {

void SelectionMasks::validate(const Dataset& ds) const {
  const size_t n = static_cast<size_t>(ds.num_examples());
  if (clean.size() != n || noise.size() != n || uncertain.size() != n) {
    throw std::runtime_error("selection masks: length does not match the dataset");
  }
  for (size_t i = 0; i < n; ++i) {
    int members = (clean[i] ? 1 : 0) + (noise[i] ? 1 : 0) + (uncertain[i] ? 1 : 0);
    if (ds.train_mask[i]) {
      if (members != 1) {
        throw std::runtime_error("selection masks: train example " + std::to_string(i) +
                                 " is in " + std::to_string(members) + " sets");
      }
    } else if (members != 0) {
      throw std::runtime_error("selection masks: non-train example " + std::to_string(i) +
                               " selected");
    }
  }
}

SelectionScores compute_scores(model::TrainState& state, const Dataset& ds, uint64_t seed) {
  SelectionScores sc;
  sc.rows = ds.train_indices();
  if (sc.rows.empty()) throw std::runtime_error("infojs_select: empty train set");

  // Eval-mode forward: selection must not fluctuate with sampling noise.
  model::DualEncoding enc = model::encode(state, ds, sc.rows, /*train_mode=*/false, 0);
  Mat probs_s = model::decode_probs(state, enc.sample_s);

  const int js_samples = 64;
  const Mat plan = infomath::js_sample_plan(js_samples, state.cfg.latent_dim,
                                            RandomStream::fork(seed, {0x73656cULL}).next_u64());

  const long m = static_cast<long>(sc.rows.size());
  sc.loss.resize(sc.rows.size());
  sc.js.resize(sc.rows.size());
  sc.confidence.resize(sc.rows.size());
  sc.observed_class.resize(sc.rows.size());
  for (long i = 0; i < m; ++i) {
    const int row = sc.rows[static_cast<size_t>(i)];
    double ce = 0.0;
    for (int c = 0; c < ds.num_classes; ++c) {
      double y = ds.labels(row, c);
      if (y > 0) ce -= y * std::log(std::max(probs_s(i, c), 1e-12));
    }
    sc.loss[static_cast<size_t>(i)] = ce;
    sc.js[static_cast<size_t>(i)] =
        infomath::js_divergence_with_plan(enc.s_dist(i), enc.t_dist(i), plan);
    sc.confidence[static_cast<size_t>(i)] = probs_s.row(i).maxCoeff();
    sc.observed_class[static_cast<size_t>(i)] = argmax_row(ds.labels.row(row));
  }
  return sc;
}

namespace {

// Indices (into the scores arrays) of the k lowest values; ties break by
// ascending position for determinism.
std::vector<int> bottom_k(const std::vector<double>& values, const std::vector<int>& pool,
                          int k) {
  std::vector<int> order = pool;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)]) {
      return values[static_cast<size_t>(a)] < values[static_cast<size_t>(b)];
    }
    return a < b;
  });
  order.resize(static_cast<size_t>(std::min<long>(k, static_cast<long>(order.size()))));
  return order;
}

std::vector<int> top_k(const std::vector<double>& values, const std::vector<int>& pool, int k) {
  std::vector<int> order = pool;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)]) {
      return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    }
    return a < b;
  });
  order.resize(static_cast<size_t>(std::min<long>(k, static_cast<long>(order.size()))));
  return order;
}

}  // namespace

SelectionMasks select_from_scores(const SelectionScores& scores, double delta,
                                  const HyperParams& hp, int num_classes, long num_examples) {
  if (!(delta > 0 && delta <= 1)) throw std::invalid_argument("delta must be in (0,1]");
  if (scores.rows.empty()) throw std::runtime_error("infojs_select: empty train set");
  const long n_train = static_cast<long>(scores.rows.size());
  const long cap = std::max<long>(1, n_train / num_classes);

  std::vector<uint8_t> cand_clean(scores.rows.size(), 0), cand_noise(scores.rows.size(), 0);
  for (int j = 0; j < num_classes; ++j) {
    std::vector<int> pool;
    for (size_t i = 0; i < scores.rows.size(); ++i) {
      if (scores.observed_class[i] == j) pool.push_back(static_cast<int>(i));
    }
    if (pool.empty()) continue;
    const int kj = static_cast<int>(std::max<long>(
        1, std::min<long>(static_cast<long>(std::ceil(delta * static_cast<double>(pool.size()))),
                          cap)));
    for (int i : bottom_k(scores.loss, pool, kj)) cand_clean[static_cast<size_t>(i)] = 1;
    for (int i : bottom_k(scores.js, pool, kj)) cand_clean[static_cast<size_t>(i)] = 1;
    for (int i : top_k(scores.loss, pool, kj)) cand_noise[static_cast<size_t>(i)] = 1;
    for (int i : top_k(scores.js, pool, kj)) cand_noise[static_cast<size_t>(i)] = 1;
  }

  // Absolute-confidence augmentation.
  for (size_t i = 0; i < scores.rows.size(); ++i) {
    if (scores.confidence[i] >= hp.conf_hi) cand_clean[i] = 1;
    if (scores.confidence[i] <= hp.conf_lo) cand_noise[i] = 1;
  }

  SelectionMasks masks;
  masks.clean.assign(static_cast<size_t>(num_examples), 0);
  masks.noise.assign(static_cast<size_t>(num_examples), 0);
  masks.uncertain.assign(static_cast<size_t>(num_examples), 0);
  for (size_t i = 0; i < scores.rows.size(); ++i) {
    const size_t row = static_cast<size_t>(scores.rows[i]);
    if (cand_clean[i] && !cand_noise[i]) {
      masks.clean[row] = 1;
    } else if (cand_noise[i] && !cand_clean[i]) {
      masks.noise[row] = 1;
    } else {
      masks.uncertain[row] = 1;  // unselected, or claimed by both sides
    }
  }
  return masks;
}

SelectionMasks infojs_select(model::TrainState& state, const Dataset& ds, double delta,
                             const HyperParams& hp, uint64_t seed) {
  if (state.epoch < state.schedule.epochs_warmup) {
    throw std::runtime_error("infojs_select: selection requires completed warmup (epoch " +
                             std::to_string(state.epoch) + " < " +
                             std::to_string(state.schedule.epochs_warmup) + ")");
  }
  SelectionScores sc = compute_scores(state, ds, seed);
  SelectionMasks masks =
      select_from_scores(sc, delta, hp, ds.num_classes, ds.num_examples());
  masks.validate(ds);
  return masks;
}

BranchTargets assign_targets(const SelectionMasks& masks, const Dataset& ds, const Mat& probs_s,
                             const Mat& probs_t) {
  const long n = ds.num_examples();
  if (static_cast<long>(masks.clean.size()) != n) {
    throw std::invalid_argument("assign_targets: mask/dataset size mismatch");
  }
  if (probs_s.rows() != n || probs_t.rows() != n) {
    throw std::invalid_argument("assign_targets: prediction/dataset size mismatch");
  }
  BranchTargets out;
  out.targets_s = ds.labels;
  out.targets_t = ds.labels;
  for (long i = 0; i < n; ++i) {
    if (masks.uncertain[static_cast<size_t>(i)]) {
      out.targets_s.row(i) = one_hot(argmax_row(probs_s.row(i)), ds.num_classes).transpose();
      out.targets_t.row(i) = one_hot(argmax_row(probs_t.row(i)), ds.num_classes).transpose();
    }
  }
  return out;
}

}  // namespace nrib::selector
