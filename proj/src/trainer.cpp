#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "infomath.hpp"
#include "losses.hpp"
#include "rng.hpp"

namespace nrib::trainer {

namespace {
constexpr int kBatchSize = 128;
constexpr int kTrainJsSamples = 64;
}  // namespace

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::kWarmup: return "warmup";
    case Phase::kInjection: return "injection";
    case Phase::kRobust: return "robust";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no-ki") return Variant::kNoKI;
  if (name == "no-rt") return Variant::kNoRT;
  if (name == "baseline") return Variant::kBaseline;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected full|no-ki|no-rt|baseline)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoKI: return "no-ki";
    case Variant::kNoRT: return "no-rt";
    case Variant::kBaseline: return "baseline";
  }
  return "?";
}

OptimizerSettings optimizer_settings(Mode mode) {
  OptimizerSettings s;
  if (mode == Mode::kGraph) {
    s.lr = 0.001;
    s.adam = true;
    s.weight_decay = 0.0;
  }
  return s;
}

void apply_step(const OptimizerSettings& opt, model::OptimizerState& state,
                const std::vector<std::pair<std::string, Mat*>>& params,
                const std::vector<Mat>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("apply_step: parameter/gradient count mismatch");
  }
  state.step_count += 1;
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i].first;
    Mat& w = *params[i].second;
    const Mat& grad = grads[i];
    if (opt.adam) {
      Mat& m = state.slot_a.try_emplace(name, Mat::Zero(w.rows(), w.cols())).first->second;
      Mat& v = state.slot_b.try_emplace(name, Mat::Zero(w.rows(), w.cols())).first->second;
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
      const double t = static_cast<double>(state.step_count);
      Mat mhat = m / (1.0 - std::pow(b1, t));
      Mat vhat = v / (1.0 - std::pow(b2, t));
      w.array() -= opt.lr * mhat.array() / (vhat.array().sqrt() + eps);
    } else {
      Mat g = grad + opt.weight_decay * w;
      Mat& vel = state.slot_a.try_emplace(name, Mat::Zero(w.rows(), w.cols())).first->second;
      vel = opt.momentum * vel - opt.lr * g;
      w += vel;
    }
  }
}

// ---------------------------------------------------------------------------
// Label refinement

Mat refine_labels_vector(const Mat& labels, const Mat& predictions, double ema_rate, int epoch,
                         int ema_period) {
  if (!(ema_rate >= 0.0 && ema_rate <= 1.0)) {
    throw std::invalid_argument("refine_labels_vector: ema_rate must be in [0,1]");
  }
  if (ema_period < 1) throw std::invalid_argument("refine_labels_vector: ema_period must be >= 1");
  if (epoch % ema_period != 0) return labels;
  if (labels.rows() != predictions.rows() || labels.cols() != predictions.cols()) {
    throw std::invalid_argument("refine_labels_vector: shape mismatch");
  }
  Mat out = (1.0 - ema_rate) * labels + ema_rate * predictions;
  for (long i = 0; i < out.rows(); ++i) out.row(i) /= out.row(i).sum();
  return out;
}

Mat refine_labels_graph(const Mat& labels, const Mat& predictions, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("refine_labels_graph: tau must be in (0,1)");
  }
  if (labels.rows() != predictions.rows() || labels.cols() != predictions.cols()) {
    throw std::invalid_argument("refine_labels_graph: shape mismatch");
  }
  Mat out = labels;
  const int c = static_cast<int>(labels.cols());
  for (long i = 0; i < out.rows(); ++i) {
    if (predictions.row(i).maxCoeff() > tau) {
      out.row(i) = one_hot(argmax_row(predictions.row(i)), c).transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Internals

namespace {

Mat gather_mat(const Mat& m, const std::vector<int>& rows) {
  Mat out(static_cast<long>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = m.row(rows[i]);
  return out;
}

std::vector<std::vector<int>> make_batches(std::vector<int> rows, int batch_size,
                                           RandomStream& rng) {
  rng.shuffle(rows);
  std::vector<std::vector<int>> batches;
  for (size_t i = 0; i < rows.size(); i += static_cast<size_t>(batch_size)) {
    size_t end = std::min(rows.size(), i + static_cast<size_t>(batch_size));
    batches.emplace_back(rows.begin() + static_cast<long>(i), rows.begin() + static_cast<long>(end));
  }
  // A trailing singleton cannot feed the discriminator pairing; fold it back.
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

double accuracy_against(const Mat& probs, const Mat& label_rows) {
  if (probs.rows() == 0) return 0.0;
  long hits = 0;
  for (long i = 0; i < probs.rows(); ++i) {
    if (argmax_row(probs.row(i)) == argmax_row(label_rows.row(i))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

double mean_ce(const Mat& probs, const Mat& label_rows) {
  if (probs.rows() == 0) return 0.0;
  double acc = 0.0;
  for (long i = 0; i < probs.rows(); ++i) {
    for (long c = 0; c < probs.cols(); ++c) {
      if (label_rows(i, c) > 0) {
        acc -= label_rows(i, c) * std::log(std::max(probs(i, c), 1e-12));
      }
    }
  }
  return acc / static_cast<double>(probs.rows());
}

// Maps bound parameter storage back to registered names and merges duplicate
// bindings of the same matrix before taking an optimizer step.
void step_from_graph(model::TrainState& state, model::OptimizerState& opt_state, ad::Graph& g,
                     const model::Bound& bound) {
  auto entries = model::param_entries(state);
  std::map<const Mat*, std::string> names;
  for (auto& [n, m] : entries) names[m] = n;

  std::map<Mat*, Mat> merged;
  for (const auto& [mp, var] : bound.entries) {
    const Mat& grad = g.grad(var);
    auto it = merged.find(mp);
    if (it == merged.end()) {
      merged.emplace(mp, grad);
    } else {
      it->second += grad;
    }
  }
  std::vector<std::pair<std::string, Mat*>> params;
  std::vector<Mat> grads;
  for (auto& [mp, grad] : merged) {
    params.push_back({names.at(mp), mp});
    grads.push_back(grad);
  }
  apply_step(optimizer_settings(state.cfg.mode), opt_state, params, grads);
}

struct ForwardVars {
  losses::EncodingVars enc;
  ad::Var probs_s, probs_t;
  losses::GraphMinimalInputs gmin_s, gmin_t;
  bool has_graph_stats = false;
};

// Tape forward of both branches for `rows`, with samples drawn from
// draw_seed (or means if train_mode is false). Graph mode encodes all nodes
// and gathers `rows` for the supervised heads.
ForwardVars forward_both(ad::Graph& g, model::Bound& bound, model::TrainState& state,
                         const Dataset& ds, const std::vector<int>& rows, bool train_mode,
                         uint64_t draw_seed, bool frozen_encoders, bool frozen_decoder) {
  ForwardVars out;
  const int k = state.cfg.latent_dim;
  if (state.cfg.mode == Mode::kVector) {
    ad::Var x = g.constant(gather_mat(ds.features, rows));
    Mat eps_s, eps_t;
    const Mat* ps = nullptr;
    const Mat* pt = nullptr;
    if (train_mode) {
      eps_s = model::gaussian_eps(static_cast<int>(rows.size()), k,
                                  RandomStream::fork(draw_seed, {0xa1}).next_u64());
      eps_t = model::gaussian_eps(static_cast<int>(rows.size()), k,
                                  RandomStream::fork(draw_seed, {0xa2}).next_u64());
      ps = &eps_s;
      pt = &eps_t;
    }
    model::EncVars s = model::encode_dense(g, bound, state.enc_s, x, ps, frozen_encoders);
    model::EncVars t = model::encode_dense(g, bound, state.enc_t, x, pt, frozen_encoders);
    out.enc = {s.mean, s.logvar, s.sample, t.mean, t.logvar, t.sample};
    out.probs_s = g.softmax_rows(
        model::decode_logits(g, bound, state.decoder, s.sample, frozen_decoder));
    out.probs_t = g.softmax_rows(
        model::decode_logits(g, bound, state.decoder, t.sample, frozen_decoder));
  } else {
    model::GraphTopology topo = model::build_topology(ds);
    ad::Var x = g.constant(ds.features);
    Mat eps_s, eps_t;
    const Mat* ps = nullptr;
    const Mat* pt = nullptr;
    if (train_mode) {
      eps_s = model::gaussian_eps(topo.num_nodes, k, RandomStream::fork(draw_seed, {0xa1}).next_u64());
      eps_t = model::gaussian_eps(topo.num_nodes, k, RandomStream::fork(draw_seed, {0xa2}).next_u64());
      ps = &eps_s;
      pt = &eps_t;
    }
    std::vector<model::GatLayerStats> stats_s, stats_t;
    model::EncVars s = model::encode_gat(g, bound, state.enc_s, x, topo, ps, frozen_encoders,
                                         &stats_s);
    model::EncVars t = model::encode_gat(g, bound, state.enc_t, x, topo, pt, frozen_encoders,
                                         &stats_t);

    // Supervised heads see the requested rows only; the compression term
    // stays over all nodes and edges.
    ad::Var s_mean = g.gather_rows(s.mean, rows), s_logvar = g.gather_rows(s.logvar, rows),
            s_sample = g.gather_rows(s.sample, rows);
    ad::Var t_mean = g.gather_rows(t.mean, rows), t_logvar = g.gather_rows(t.logvar, rows),
            t_sample = g.gather_rows(t.sample, rows);
    out.enc = {s_mean, s_logvar, s_sample, t_mean, t_logvar, t_sample};
    out.probs_s = g.softmax_rows(
        model::decode_logits(g, bound, state.decoder, s_sample, frozen_decoder));
    out.probs_t = g.softmax_rows(
        model::decode_logits(g, bound, state.decoder, t_sample, frozen_decoder));

    const bool frozen_mix = frozen_encoders;
    auto fill_gmin = [&](losses::GraphMinimalInputs& gm, model::EncVars& e,
                         std::vector<model::GatLayerStats>& stats, model::GaussMixture& mix) {
      for (auto& st : stats) gm.phi.push_back(g.clamp(st.phi, 1e-6, 1.0 - 1e-6));
      gm.z = e.sample;
      gm.mean = e.mean;
      gm.logvar = e.logvar;
      gm.mix_weight_logits = bound.bind(mix.weight_logits, frozen_mix);
      gm.mix_means = bound.bind(mix.means, frozen_mix);
      gm.mix_logvars = bound.bind(mix.logvars, frozen_mix);
    };
    fill_gmin(out.gmin_s, s, stats_s, state.mix_s);
    fill_gmin(out.gmin_t, t, stats_t, state.mix_t);
    out.has_graph_stats = true;
  }
  return out;
}

void accumulate_components(std::map<std::string, double>& sink,
                           const std::map<std::string, double>& batch, double weight) {
  for (const auto& [k, v] : batch) sink[k] += weight * v;
}

EpochRecord make_record(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                        Phase phase, std::map<std::string, double> loss_components) {
  EpochRecord rec;
  rec.epoch = state.epoch;
  rec.phase = phase;
  rec.loss_components = std::move(loss_components);

  const auto train_rows = ds.train_indices();
  const auto test_rows = ds.test_indices();
  const auto val_rows = ds.val_indices();

  model::BranchProbs train_p = model::predict(state, ds, train_rows);
  rec.train_acc_s = accuracy_against(train_p.probs_s, gather_mat(working_labels, train_rows));
  rec.train_acc_t = accuracy_against(train_p.probs_t, gather_mat(working_labels, train_rows));
  if (!test_rows.empty()) {
    model::BranchProbs test_p = model::predict(state, ds, test_rows);
    rec.test_acc_s = accuracy_against(test_p.probs_s, gather_mat(ds.labels, test_rows));
    rec.test_acc_t = accuracy_against(test_p.probs_t, gather_mat(ds.labels, test_rows));
  }
  if (!val_rows.empty()) {
    model::BranchProbs val_p = model::predict(state, ds, val_rows);
    rec.val_loss_s = mean_ce(val_p.probs_s, gather_mat(ds.labels, val_rows));
    rec.val_loss_t = mean_ce(val_p.probs_t, gather_mat(ds.labels, val_rows));
  }

  // Eval-mode per-sample JS over the train set (Observation-style diagnostic).
  selector::SelectionScores sc = selector::compute_scores(
      state, ds, RandomStream::fork(state.seed, {0x6d65, static_cast<uint64_t>(state.epoch)})
                     .next_u64());
  double js_sum = 0.0;
  for (double j : sc.js) js_sum += j;
  rec.js_mean = sc.js.empty() ? 0.0 : js_sum / static_cast<double>(sc.js.size());
  return rec;
}

void warmup_like_epoch(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                       bool use_sample) {
  const auto train_rows = ds.train_indices();
  if (train_rows.empty()) throw std::runtime_error("empty train set");
  RandomStream order = RandomStream::fork(state.seed, {0xba7c4, static_cast<uint64_t>(state.epoch)});
  std::vector<std::vector<int>> batches =
      state.cfg.mode == Mode::kVector
          ? make_batches(train_rows, kBatchSize, order)
          : std::vector<std::vector<int>>{train_rows};

  for (size_t b = 0; b < batches.size(); ++b) {
    const auto& rows = batches[b];
    ad::Graph g;
    model::Bound bound{&g, {}};
    const uint64_t draw_seed =
        RandomStream::fork(state.seed, {0x11, static_cast<uint64_t>(state.epoch), b}).next_u64();

    ad::Var probs_s;
    if (state.cfg.mode == Mode::kVector) {
      ad::Var x = g.constant(gather_mat(ds.features, rows));
      Mat eps;
      const Mat* pe = nullptr;
      if (use_sample) {
        eps = model::gaussian_eps(static_cast<int>(rows.size()), state.cfg.latent_dim, draw_seed);
        pe = &eps;
      }
      model::EncVars s = model::encode_dense(g, bound, state.enc_s, x, pe, false);
      probs_s = g.softmax_rows(model::decode_logits(g, bound, state.decoder, s.sample, false));
    } else {
      model::GraphTopology topo = model::build_topology(ds);
      ad::Var x = g.constant(ds.features);
      Mat eps;
      const Mat* pe = nullptr;
      if (use_sample) {
        eps = model::gaussian_eps(topo.num_nodes, state.cfg.latent_dim, draw_seed);
        pe = &eps;
      }
      model::EncVars s = model::encode_gat(g, bound, state.enc_s, x, topo, pe, false, nullptr);
      probs_s = g.softmax_rows(
          model::decode_logits(g, bound, state.decoder, g.gather_rows(s.sample, rows), false));
    }
    ad::Var loss = losses::warmup_loss(g, probs_s, gather_mat(working_labels, rows));
    g.backward(loss);
    step_from_graph(state, state.opt_q, g, bound);
  }
}

}  // namespace

void run_warmup(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                std::vector<EpochRecord>& history) {
  const int e_end = state.schedule.epochs_warmup;
  if (e_end == 0) return;
  if (state.epoch >= e_end) {
    throw std::runtime_error("run_warmup: schedule already past warmup (epoch " +
                             std::to_string(state.epoch) + ")");
  }
  while (state.epoch < e_end) {
    std::map<std::string, double> comps;
    warmup_like_epoch(state, ds, working_labels, /*use_sample=*/true);
    comps["warmup_ce"] = 0.0;  // recomputed below from the eval pass
    model::BranchProbs p = model::predict(state, ds, ds.train_indices());
    comps["warmup_ce"] = mean_ce(p.probs_s, gather_mat(working_labels, ds.train_indices()));
    state.epoch += 1;
    history.push_back(make_record(state, ds, working_labels, Phase::kWarmup, std::move(comps)));
  }
}

void run_injection(model::TrainState& state, const Dataset& ds, const Mat& working_labels,
                   std::vector<EpochRecord>& history) {
  const int e_begin = state.schedule.epochs_warmup;
  const int e_end = e_begin + state.schedule.epochs_injection;
  if (state.schedule.epochs_injection == 0) return;
  if (state.epoch < e_begin) {
    throw std::runtime_error("run_injection: warmup has not completed");
  }

  while (state.epoch < e_end) {
    const uint64_t sel_seed =
        RandomStream::fork(state.seed, {0x21, static_cast<uint64_t>(state.epoch)}).next_u64();
    selector::SelectionScores scores = selector::compute_scores(state, ds, sel_seed);
    selector::SelectionMasks masks = selector::select_from_scores(
        scores, state.hp.delta, state.hp, ds.num_classes, ds.num_examples());
    masks.validate(ds);

    // Targets come from eval-mode predictions scattered into full-size
    // matrices; only uncertain (train) rows are ever read back.
    const auto train_rows = ds.train_indices();
    model::BranchProbs preds = model::predict(state, ds, train_rows);
    Mat probs_s_full = Mat::Zero(ds.num_examples(), ds.num_classes);
    Mat probs_t_full = Mat::Zero(ds.num_examples(), ds.num_classes);
    for (size_t i = 0; i < train_rows.size(); ++i) {
      probs_s_full.row(train_rows[i]) = preds.probs_s.row(static_cast<long>(i));
      probs_t_full.row(train_rows[i]) = preds.probs_t.row(static_cast<long>(i));
    }
    selector::BranchTargets targets = selector::assign_targets(masks, ds, probs_s_full,
                                                               probs_t_full);

    RandomStream order =
        RandomStream::fork(state.seed, {0xba7c4, static_cast<uint64_t>(state.epoch)});
    std::vector<std::vector<int>> batches =
        state.cfg.mode == Mode::kVector
            ? make_batches(train_rows, kBatchSize, order)
            : std::vector<std::vector<int>>{train_rows};

    std::map<std::string, double> comps;
    double total_weight = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      ad::Graph g;
      model::Bound bound{&g, {}};
      const uint64_t draw_seed =
          RandomStream::fork(state.seed, {0x22, static_cast<uint64_t>(state.epoch), b})
              .next_u64();
      ForwardVars fw = forward_both(g, bound, state, ds, rows, /*train_mode=*/true, draw_seed,
                                    /*frozen_encoders=*/false, /*frozen_decoder=*/false);

      losses::InjectionBatch ib;
      ib.clean_mask = Mat::Zero(static_cast<long>(rows.size()), 1);
      ib.noise_mask = Mat::Zero(static_cast<long>(rows.size()), 1);
      ib.uncertain_mask = Mat::Zero(static_cast<long>(rows.size()), 1);
      for (size_t i = 0; i < rows.size(); ++i) {
        ib.clean_mask(static_cast<long>(i), 0) = masks.clean[static_cast<size_t>(rows[i])];
        ib.noise_mask(static_cast<long>(i), 0) = masks.noise[static_cast<size_t>(rows[i])];
        ib.uncertain_mask(static_cast<long>(i), 0) =
            masks.uncertain[static_cast<size_t>(rows[i])];
      }
      ib.targets_s = gather_mat(targets.targets_s, rows);
      ib.targets_t = gather_mat(targets.targets_t, rows);

      const Mat js_plan = infomath::js_sample_plan(
          kTrainJsSamples, state.cfg.latent_dim,
          RandomStream::fork(state.seed, {0x23, static_cast<uint64_t>(state.epoch), b})
              .next_u64());

      ad::Var loss = losses::injection_loss(g, fw.enc, fw.probs_s, fw.probs_t, ib, state.hp,
                                            js_plan, state.cfg.mode,
                                            fw.has_graph_stats ? &fw.gmin_s : nullptr,
                                            fw.has_graph_stats ? &fw.gmin_t : nullptr);
      g.backward(loss);
      step_from_graph(state, state.opt_q, g, bound);

      const double w = static_cast<double>(rows.size());
      comps["injection_total"] += w * g.value(loss)(0, 0);
      total_weight += w;
    }
    for (auto& [k, v] : comps) v /= total_weight;

    state.epoch += 1;
    EpochRecord rec = make_record(state, ds, working_labels, Phase::kInjection, std::move(comps));
    rec.has_selection = true;
    rec.masks = masks;
    rec.scores = scores;
    history.push_back(std::move(rec));
  }
}

void run_robust(model::TrainState& state, const Dataset& ds, Mat& working_labels,
                std::vector<EpochRecord>& history) {
  const int e_begin = state.schedule.epochs_warmup + state.schedule.epochs_injection;
  const int e_end = e_begin + state.schedule.epochs_robust;
  if (state.schedule.epochs_robust == 0) return;
  if (state.epoch < e_begin) {
    throw std::runtime_error("run_robust: injection has not completed");
  }

  while (state.epoch < e_end) {
    const int local_epoch = state.epoch - e_begin + 1;
    const auto train_rows = ds.train_indices();

    // Label refinement on the working copy (original labels stay archived in
    // the dataset).
    model::BranchProbs preds = model::predict(state, ds, train_rows);
    Mat train_labels = gather_mat(working_labels, train_rows);
    Mat refined;
    if (state.cfg.mode == Mode::kVector) {
      refined = refine_labels_vector(train_labels, preds.probs_s, state.hp.ema_rate, local_epoch,
                                     state.hp.ema_period);
    } else {
      refined = refine_labels_graph(train_labels, preds.probs_s, state.hp.tau);
    }
    for (size_t i = 0; i < train_rows.size(); ++i) {
      working_labels.row(train_rows[i]) = refined.row(static_cast<long>(i));
    }

    RandomStream order =
        RandomStream::fork(state.seed, {0xba7c4, static_cast<uint64_t>(state.epoch)});
    std::vector<std::vector<int>> batches =
        state.cfg.mode == Mode::kVector
            ? make_batches(train_rows, kBatchSize, order)
            : std::vector<std::vector<int>>{train_rows};

    std::map<std::string, double> comps;
    double total_weight = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      if (rows.size() < 2) {
        throw std::runtime_error("run_robust: batch size < 2 cannot feed the discriminator");
      }
      const Mat targets = gather_mat(working_labels, rows);
      const uint64_t draw_seed =
          RandomStream::fork(state.seed, {0x31, static_cast<uint64_t>(state.epoch), b})
              .next_u64();

      // q step: encoders/decoder (and graph mixtures) learn, discriminator
      // frozen.
      {
        ad::Graph g;
        model::Bound bound{&g, {}};
        ForwardVars fw = forward_both(g, bound, state, ds, rows, true, draw_seed, false, false);
        ad::Var y_const = g.constant(targets);
        ad::Var d_pos = model::discriminate_probs(g, bound, state.disc, fw.enc.sample_s, y_const,
                                                  fw.enc.sample_t, y_const, /*frozen=*/true);
        ad::Var loss = losses::robust_loss(g, fw.enc, fw.probs_s, fw.probs_t, targets, d_pos,
                                           state.hp, state.cfg.mode,
                                           fw.has_graph_stats ? &fw.gmin_s : nullptr,
                                           fw.has_graph_stats ? &fw.gmin_t : nullptr);
        g.backward(loss);
        step_from_graph(state, state.opt_q, g, bound);
        const double w = static_cast<double>(rows.size());
        comps["robust_total"] += w * g.value(loss)(0, 0);
        total_weight += w;
      }

      // d step: fresh samples, encoders detached, discriminator learns.
      {
        model::DualEncoding enc = model::encode(
            state, ds, rows, true,
            RandomStream::fork(state.seed, {0x32, static_cast<uint64_t>(state.epoch), b})
                .next_u64());
        const long nb = static_cast<long>(rows.size());
        const int shift = losses::permutation_shift(
            nb, RandomStream::fork(state.seed, {0x33, static_cast<uint64_t>(state.epoch), b})
                     .next_u64());
        Mat t_neg(nb, enc.sample_t.cols()), y_neg(nb, targets.cols());
        for (long i = 0; i < nb; ++i) {
          long j = (i + shift) % nb;
          t_neg.row(i) = enc.sample_t.row(j);
          y_neg.row(i) = targets.row(j);
        }
        ad::Graph g;
        model::Bound bound{&g, {}};
        ad::Var s = g.constant(enc.sample_s);
        ad::Var t = g.constant(enc.sample_t);
        ad::Var y = g.constant(targets);
        ad::Var d_pos = model::discriminate_probs(g, bound, state.disc, s, y, t, y, false);
        ad::Var d_neg = model::discriminate_probs(g, bound, state.disc, s, y,
                                                  g.constant(t_neg), g.constant(y_neg), false);
        ad::Var loss = losses::discriminator_loss(g, d_pos, d_neg);
        g.backward(loss);
        step_from_graph(state, state.opt_d, g, bound);
        comps["discriminator"] += static_cast<double>(rows.size()) * g.value(loss)(0, 0);
      }
    }
    for (auto& [k, v] : comps) v /= total_weight;

    state.epoch += 1;
    history.push_back(make_record(state, ds, working_labels, Phase::kRobust, std::move(comps)));
  }
}

TrainResult train(const Dataset& ds, const Config& config, Variant variant) {
  ds.validate();
  if (config.meta.mode != ds.mode) {
    throw std::invalid_argument("train: config mode does not match the dataset mode");
  }
  PhaseSchedule schedule = config.schedule;
  if (variant == Variant::kNoKI) schedule.epochs_injection = 0;
  if (variant == Variant::kNoRT) schedule.epochs_robust = 0;

  model::ModelConfig mc;
  mc.mode = ds.mode;
  mc.input_dim = ds.feature_dim();
  mc.num_classes = ds.num_classes;
  mc.latent_dim = config.hp.latent_dim;
  mc.hidden_dim = ds.mode == Mode::kVector ? 64 : 16;

  TrainResult result{model::init_train_state(mc, config.hp, schedule, config.meta.seed), {}};
  model::TrainState& state = result.state;

  Mat working = ds.labels;

  auto guarded = [&](Phase phase, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& ex) {
      throw std::runtime_error("phase=" + phase_name(phase) + " epoch=" +
                               std::to_string(state.epoch) + ": " + ex.what());
    }
  };

  if (variant == Variant::kBaseline) {
    // Plain single-encoder CE learner: same backbone, same epoch budget,
    // deterministic mean-latent forward.
    const int total = schedule.total();
    guarded(Phase::kWarmup, [&] {
      while (state.epoch < total) {
        warmup_like_epoch(state, ds, working, /*use_sample=*/false);
        std::map<std::string, double> comps;
        model::BranchProbs p = model::predict(state, ds, ds.train_indices());
        comps["warmup_ce"] = mean_ce(p.probs_s, gather_mat(working, ds.train_indices()));
        state.epoch += 1;
        result.history.push_back(
            make_record(state, ds, working, Phase::kWarmup, std::move(comps)));
      }
    });
    return result;
  }

  guarded(Phase::kWarmup, [&] { run_warmup(state, ds, working, result.history); });
  guarded(Phase::kInjection, [&] { run_injection(state, ds, working, result.history); });
  guarded(Phase::kRobust, [&] { run_robust(state, ds, working, result.history); });
  return result;
}

}  // namespace nrib::trainer
