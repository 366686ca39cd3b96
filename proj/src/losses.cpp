#include "losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rng.hpp"

namespace nrib::losses {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;

// Per-sample log density of rows of x under row-aligned diagonal Gaussians.
ad::Var gaussian_log_density(ad::Graph& g, ad::Var x, ad::Var mean, ad::Var logvar) {
  ad::Var diff = g.sub(x, mean);
  ad::Var quad = g.mul(g.square(diff), g.exp(g.neg(logvar)));
  ad::Var terms = g.scalar_add(g.add(quad, logvar), kLog2Pi);
  return g.scalar_mul(g.rowwise_sum(terms), -0.5);
}

// Log density under a broadcast (1 x k) Gaussian, one row per sample of x.
ad::Var gaussian_log_density_row(ad::Graph& g, ad::Var x, ad::Var mean_row, ad::Var logvar_row) {
  ad::Var diff = g.add_rowvec(x, g.neg(mean_row));
  ad::Var quad = g.mul_rowvec(g.square(diff), g.exp(g.neg(logvar_row)));
  ad::Var terms = g.scalar_add(g.add_rowvec(quad, logvar_row), kLog2Pi);
  return g.scalar_mul(g.rowwise_sum(terms), -0.5);
}

ad::Var per_sample_kl_std(ad::Graph& g, ad::Var mean, ad::Var logvar) {
  ad::Var terms = g.scalar_add(g.sub(g.add(g.square(mean), g.exp(logvar)), logvar), -1.0);
  return g.scalar_mul(g.rowwise_sum(terms), 0.5);
}

// Mean of per-sample values over the rows flagged in mask; zero Var if none.
ad::Var masked_mean(ad::Graph& g, ad::Var per_sample, const Mat& mask) {
  double count = mask.sum();
  if (count == 0) return ad::Var{};
  ad::Var weighted = g.mul(per_sample, g.constant(mask));
  return g.scalar_mul(g.sum(weighted), 1.0 / count);
}

ad::Var softmin_rows(ad::Graph& g, ad::Var a, ad::Var b, double lambda) {
  // -(1/l) log(e^{-l a} + e^{-l b}), rowwise over two N x 1 columns.
  ad::Var stacked = g.hcat(g.scalar_mul(a, -lambda), g.scalar_mul(b, -lambda));
  return g.scalar_mul(g.logsumexp_rows(stacked), -1.0 / lambda);
}

}  // namespace

ad::Var per_sample_ce(ad::Graph& g, ad::Var probs, const Mat& targets) {
  if (g.value(probs).rows() != targets.rows() || g.value(probs).cols() != targets.cols()) {
    throw std::invalid_argument("cross entropy: prediction/target shape mismatch");
  }
  return g.neg(g.rowwise_sum(g.mul(g.constant(targets), g.safe_log(probs))));
}

ad::Var warmup_loss(ad::Graph& g, ad::Var probs_s, const Mat& targets) {
  if (targets.rows() == 0) throw std::invalid_argument("warmup_loss: empty batch");
  return g.mean_all(per_sample_ce(g, probs_s, targets));
}

ad::Var js_per_sample(ad::Graph& g, ad::Var mean1, ad::Var logvar1, ad::Var mean2,
                      ad::Var logvar2, const Mat& plan) {
  const long n = g.value(mean1).rows();
  const long k = g.value(mean1).cols();
  if (g.value(mean2).cols() != k) throw std::invalid_argument("js: dimension mismatch");
  if (plan.cols() != k) throw std::invalid_argument("js: plan dimension mismatch");
  const double log_half = std::log(0.5);

  ad::Var std1 = g.exp(g.scalar_mul(logvar1, 0.5));
  ad::Var std2 = g.exp(g.scalar_mul(logvar2, 0.5));

  ad::Var acc1, acc2;
  for (long r = 0; r < plan.rows(); ++r) {
    ad::Var eps = g.constant(plan.row(r));
    ad::Var x1 = g.add(mean1, g.mul_rowvec(std1, eps));
    ad::Var l11 = gaussian_log_density(g, x1, mean1, logvar1);
    ad::Var l12 = gaussian_log_density(g, x1, mean2, logvar2);
    ad::Var mix1 = g.scalar_add(g.logsumexp_rows(g.hcat(l11, l12)), log_half);
    ad::Var t1 = g.sub(l11, mix1);
    acc1 = acc1.valid() ? g.add(acc1, t1) : t1;

    ad::Var x2 = g.add(mean2, g.mul_rowvec(std2, eps));
    ad::Var l21 = gaussian_log_density(g, x2, mean1, logvar1);
    ad::Var l22 = gaussian_log_density(g, x2, mean2, logvar2);
    ad::Var mix2 = g.scalar_add(g.logsumexp_rows(g.hcat(l21, l22)), log_half);
    ad::Var t2 = g.sub(l22, mix2);
    acc2 = acc2.valid() ? g.add(acc2, t2) : t2;
  }
  const double inv = 0.5 / static_cast<double>(plan.rows());
  ad::Var js = g.add(g.scalar_mul(acc1, inv), g.scalar_mul(acc2, inv));
  (void)n;
  return g.clamp(js, 0.0, std::numbers::ln2);
}

ad::Var minimal_loss_vector(ad::Graph& g, const EncodingVars& enc) {
  ad::Var kl_s = per_sample_kl_std(g, enc.mean_s, enc.logvar_s);
  ad::Var kl_t = per_sample_kl_std(g, enc.mean_t, enc.logvar_t);
  return g.mean_all(g.add(kl_s, kl_t));
}

ad::Var minimal_loss_graph(ad::Graph& g, const GraphMinimalInputs& in) {
  if (!(in.alpha > 0.0 && in.alpha < 1.0)) {
    throw std::invalid_argument("minimal_loss_graph: alpha must be in (0,1)");
  }
  ad::Var total;
  // Structural branch: sum of Bernoulli KLs over every configured layer's edges.
  for (ad::Var phi : in.phi) {
    const Mat& pv = g.value(phi);
    if ((pv.array() <= 0.0).any() || (pv.array() >= 1.0).any()) {
      throw std::invalid_argument("minimal_loss_graph: phi must lie strictly inside (0,1)");
    }
    ad::Var one_minus = g.scalar_add(g.neg(phi), 1.0);
    ad::Var kl = g.add(g.mul(phi, g.scalar_add(g.safe_log(phi), -std::log(in.alpha))),
                       g.mul(one_minus, g.scalar_add(g.safe_log(one_minus),
                                                     -std::log(1.0 - in.alpha))));
    ad::Var s = g.sum(kl);
    total = total.valid() ? g.add(total, s) : s;
  }

  // Feature branch: per-node log posterior density minus log mixture density.
  ad::Var own = gaussian_log_density(g, in.z, in.mean, in.logvar);
  const long m = g.value(in.mix_means).rows();
  ad::Var log_w = g.safe_log(g.softmax_rows(in.mix_weight_logits));  // 1 x m
  ad::Var comp_matrix;
  for (long i = 0; i < m; ++i) {
    ad::Var mu_i = g.gather_rows(in.mix_means, {static_cast<int>(i)});
    ad::Var lv_i = g.gather_rows(in.mix_logvars, {static_cast<int>(i)});
    ad::Var dens = gaussian_log_density_row(g, in.z, mu_i, lv_i);  // N x 1
    comp_matrix = comp_matrix.valid() ? g.hcat(comp_matrix, dens) : dens;
  }
  ad::Var mix = g.logsumexp_rows(g.add_rowvec(comp_matrix, log_w));  // N x 1
  ad::Var xib = g.sum(g.sub(own, mix));
  return total.valid() ? g.add(total, xib) : xib;
}

ad::Var injection_loss(ad::Graph& g, const EncodingVars& enc, ad::Var probs_s, ad::Var probs_t,
                       const InjectionBatch& batch, const HyperParams& hp, const Mat& js_plan,
                       Mode mode, const GraphMinimalInputs* gmin_s,
                       const GraphMinimalInputs* gmin_t) {
  const double total_members =
      batch.clean_mask.sum() + batch.noise_mask.sum() + batch.uncertain_mask.sum();
  if (total_members == 0) {
    throw std::runtime_error("injection_loss: all selection sets are empty");
  }
  ad::Var ce_s = per_sample_ce(g, probs_s, batch.targets_s);
  ad::Var ce_t = per_sample_ce(g, probs_t, batch.targets_t);
  ad::Var js = js_per_sample(g, enc.mean_s, enc.logvar_s, enc.mean_t, enc.logvar_t, js_plan);

  ad::Var loss;
  auto add_term = [&](ad::Var term) {
    if (!term.valid()) return;
    loss = loss.valid() ? g.add(loss, term) : term;
  };
  add_term(masked_mean(g, g.sub(ce_s, js), batch.clean_mask));
  add_term(masked_mean(g, g.sub(ce_t, js), batch.noise_mask));
  add_term(masked_mean(g, g.add(g.add(ce_s, ce_t), js), batch.uncertain_mask));

  if (hp.beta != 0.0) {
    ad::Var minimal;
    if (mode == Mode::kVector) {
      minimal = minimal_loss_vector(g, enc);
    } else {
      minimal = g.add(minimal_loss_graph(g, *gmin_s), minimal_loss_graph(g, *gmin_t));
    }
    add_term(g.scalar_mul(minimal, hp.beta));
  }
  return loss;
}

ad::Var conce_graph(ad::Graph& g, ad::Var probs_s, ad::Var probs_t, const Mat& targets,
                    double lambda_smooth) {
  if (targets.rows() == 0) throw std::invalid_argument("conce_graph: empty batch");
  if (!(lambda_smooth > 0)) throw std::invalid_argument("conce_graph: lambda_smooth must be > 0");
  ad::Var a = per_sample_ce(g, probs_s, targets);
  ad::Var b = per_sample_ce(g, probs_t, targets);
  return g.mean_all(softmin_rows(g, a, b, lambda_smooth));
}

ad::Var conce_image(ad::Graph& g, ad::Var probs_s, ad::Var probs_t, const Mat& targets,
                    double agree_threshold) {
  const long n = targets.rows();
  if (n == 0) throw std::invalid_argument("conce_image: empty batch");
  if (!(agree_threshold > 0 && agree_threshold < 1)) {
    throw std::invalid_argument("conce_image: agree threshold must be in (0,1)");
  }
  const Mat& ps = g.value(probs_s);
  const Mat& pt = g.value(probs_t);
  const int c = static_cast<int>(targets.cols());

  // Detached per-sample losses and argmaxes drive the masks; no gradient
  // flows through mask construction.
  std::vector<double> a(static_cast<size_t>(n)), b(static_cast<size_t>(n));
  std::vector<int> pred1(static_cast<size_t>(n)), pred2(static_cast<size_t>(n));
  long agree = 0;
  for (long i = 0; i < n; ++i) {
    double ca = 0, cb = 0;
    for (int j = 0; j < c; ++j) {
      if (targets(i, j) > 0) {
        ca -= targets(i, j) * std::log(std::max(ps(i, j), ad::kLogFloor));
        cb -= targets(i, j) * std::log(std::max(pt(i, j), ad::kLogFloor));
      }
    }
    a[static_cast<size_t>(i)] = ca;
    b[static_cast<size_t>(i)] = cb;
    pred1[static_cast<size_t>(i)] = argmax_row(ps.row(i));
    pred2[static_cast<size_t>(i)] = argmax_row(pt.row(i));
    if (pred1[static_cast<size_t>(i)] == pred2[static_cast<size_t>(i)]) ++agree;
  }
  const bool high_agreement =
      static_cast<double>(agree) / static_cast<double>(n) > agree_threshold;

  Mat y1 = targets, y2 = targets;
  for (long i = 0; i < n; ++i) {
    const size_t si = static_cast<size_t>(i);
    bool agree_i = pred1[si] == pred2[si];
    bool mask_a = high_agreement ? (a[si] < b[si]) || agree_i : (a[si] < b[si]);
    bool mask_b = high_agreement ? (a[si] > b[si]) : (a[si] > b[si]) || agree_i;
    if (mask_a) y1.row(i) = one_hot(pred1[si], c).transpose();
    if (mask_b) y2.row(i) = one_hot(pred2[si], c).transpose();
  }
  ad::Var loss1 = g.mean_all(per_sample_ce(g, probs_s, y1));
  ad::Var loss2 = g.mean_all(per_sample_ce(g, probs_t, y2));
  return g.scalar_mul(g.add(loss1, loss2), 0.5);
}

ad::Var robust_loss(ad::Graph& g, const EncodingVars& enc, ad::Var probs_s, ad::Var probs_t,
                    const Mat& targets, ad::Var disc_probs_pos, const HyperParams& hp, Mode mode,
                    const GraphMinimalInputs* gmin_s, const GraphMinimalInputs* gmin_t) {
  ad::Var loss = (mode == Mode::kVector)
                     ? conce_image(g, probs_s, probs_t, targets, hp.agree_threshold)
                     : conce_graph(g, probs_s, probs_t, targets, hp.lambda_smooth);
  if (hp.beta != 0.0) {
    ad::Var minimal = (mode == Mode::kVector)
                          ? minimal_loss_vector(g, enc)
                          : g.add(minimal_loss_graph(g, *gmin_s), minimal_loss_graph(g, *gmin_t));
    loss = g.add(loss, g.scalar_mul(minimal, hp.beta));
  }
  if (hp.gamma != 0.0) {
    ad::Var adv = g.mean_all(g.safe_log(disc_probs_pos));
    loss = g.add(loss, g.scalar_mul(adv, -hp.gamma));
  }
  return loss;
}

int permutation_shift(long batch, uint64_t seed) {
  if (batch < 2) {
    throw std::invalid_argument("discriminator pairing needs a batch of at least 2");
  }
  RandomStream rng = RandomStream::fork(seed, {0x7065726dULL});
  return rng.uniform_int(1, static_cast<int>(batch - 1));
}

ad::Var discriminator_loss(ad::Graph& g, ad::Var disc_probs_pos, ad::Var disc_probs_neg) {
  const long n = g.value(disc_probs_pos).rows();
  if (n < 2) throw std::invalid_argument("discriminator_loss: batch size must be >= 2");
  ad::Var neg_term = g.safe_log(g.scalar_add(g.neg(disc_probs_neg), 1.0));
  ad::Var pos_term = g.safe_log(disc_probs_pos);
  return g.mean_all(g.neg(g.add(neg_term, pos_term)));
}

}  // namespace nrib::losses
