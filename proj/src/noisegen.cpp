#include "noisegen.hpp"

#include <cmath>
#include <stdexcept>

#include "model.hpp"
#include "rng.hpp"

namespace nrib::noisegen {

void TransitionMatrix::validate() const {
  const int c = num_classes();
  if (matrix.cols() != c) throw std::runtime_error("transition matrix must be square");
  for (int i = 0; i < c; ++i) {
    double s = matrix.row(i).sum();
    if (std::abs(s - 1.0) > 1e-12) {
      throw std::runtime_error("transition matrix row " + std::to_string(i) +
                               " does not sum to 1 within 1e-12");
    }
    for (int j = 0; j < c; ++j) {
      if (matrix(i, j) < 0.0 || matrix(i, j) > 1.0) {
        throw std::runtime_error("transition matrix entry out of [0,1]");
      }
    }
    if (std::abs(matrix(i, i) - (1.0 - rate)) > 1e-12) {
      throw std::runtime_error("transition matrix diagonal must equal 1-rate");
    }
  }
}

TransitionMatrix build_transition_matrix(const std::string& kind, double rate, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (rate < 0.0) throw std::invalid_argument("rate must be >= 0");
  TransitionMatrix tm;
  tm.kind = kind;
  tm.rate = rate;
  const int c = num_classes;
  if (kind == "symmetric") {
    double cap = static_cast<double>(c - 1) / static_cast<double>(c);
    if (rate >= cap) {
      throw std::invalid_argument("symmetric rate must be < (C-1)/C to keep the diagonal dominant");
    }
    tm.matrix = Mat::Constant(c, c, rate / static_cast<double>(c - 1));
    tm.matrix.diagonal().setConstant(1.0 - rate);
  } else if (kind == "pair") {
    if (rate >= 0.5) throw std::invalid_argument("pair rate must be < 0.5");
    tm.matrix = Mat::Zero(c, c);
    tm.matrix.diagonal().setConstant(1.0 - rate);
    for (int i = 0; i < c; ++i) tm.matrix(i, (i + 1) % c) = rate;
  } else {
    throw std::invalid_argument("kind must be 'symmetric' or 'pair', got '" + kind + "'");
  }
  tm.validate();
  return tm;
}

void inject_noise(Dataset& ds, const TransitionMatrix& tm, uint64_t seed) {
  if (tm.num_classes() != ds.num_classes) {
    throw std::invalid_argument("transition matrix class count does not match the dataset");
  }
  const long n = ds.num_examples();
  for (long i = 0; i < n; ++i) {
    if (!ds.train_mask[static_cast<size_t>(i)]) continue;
    const int64_t truth = ds.hidden_true_labels[static_cast<size_t>(i)];
    // Per-example counter-based stream: corruption of one example is
    // independent of iteration order.
    RandomStream rng = RandomStream::fork(seed, {0x4e6f697365ULL, static_cast<uint64_t>(i)});
    double u = rng.uniform01();
    double acc = 0.0;
    int drawn = ds.num_classes - 1;
    for (int j = 0; j < ds.num_classes; ++j) {
      acc += tm.matrix(truth, j);
      if (u < acc) {
        drawn = j;
        break;
      }
    }
    ds.labels.row(i) = one_hot(drawn, ds.num_classes).transpose();
    ds.hidden_noise_mask[static_cast<size_t>(i)] = (drawn != truth) ? 1 : 0;
  }
}

Mat fgsm_perturb(model::TrainState& state, const Dataset& ds, const std::vector<int>& rows,
                 double epsilon) {
  if (epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  if (state.cfg.mode != Mode::kVector) {
    throw std::invalid_argument("fgsm: only vector-mode models are attackable");
  }
  Mat xb(static_cast<long>(rows.size()), ds.features.cols());
  Mat yb(static_cast<long>(rows.size()), ds.num_classes);
  for (size_t i = 0; i < rows.size(); ++i) {
    xb.row(static_cast<long>(i)) = ds.features.row(rows[i]);
    yb.row(static_cast<long>(i)) = ds.labels.row(rows[i]);
  }

  ad::Graph g;
  model::Bound bound{&g, {}};
  ad::Var x = g.input(xb);
  // Eval-mode mean latent: the attack is deterministic.
  model::EncVars enc = model::encode_dense(g, bound, state.enc_s, x, nullptr, /*frozen=*/true);
  ad::Var probs = g.softmax_rows(model::decode_logits(g, bound, state.decoder, enc.sample, true));
  ad::Var ce = g.neg(g.rowwise_sum(g.mul(g.constant(yb), g.safe_log(probs))));
  g.backward(g.mean_all(ce));

  const Mat& grad = g.grad(x);
  Mat out = xb;
  for (long i = 0; i < out.rows(); ++i) {
    for (long j = 0; j < out.cols(); ++j) {
      double sign = grad(i, j) > 0 ? 1.0 : (grad(i, j) < 0 ? -1.0 : 0.0);
      double v = xb(i, j) + epsilon * sign;
      out(i, j) = std::min(std::max(v, ds.box_min[j]), ds.box_max[j]);
    }
  }
  return out;
}

}  // namespace nrib::noisegen
