#include "infomath.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rng.hpp"

namespace nrib::infomath {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

double logmix2(double la, double lb) {
  // log(0.5 e^la + 0.5 e^lb), stable.
  double m = std::max(la, lb);
  return m + std::log(0.5 * std::exp(la - m) + 0.5 * std::exp(lb - m));
}
}  // namespace

DiagonalGaussian::DiagonalGaussian(Vec mean_in, Vec log_var_in)
    : mean(std::move(mean_in)), log_var(std::move(log_var_in)) {
  if (mean.size() != log_var.size()) {
    throw std::invalid_argument("DiagonalGaussian: mean/log_var dimension mismatch");
  }
  if (!mean.allFinite() || !log_var.allFinite()) {
    throw std::invalid_argument("DiagonalGaussian: parameters must be finite");
  }
  log_var = log_var.cwiseMax(-kLogVarClamp).cwiseMin(kLogVarClamp);
}

double DiagonalGaussian::log_density(const Vec& x) const {
  if (x.size() != mean.size()) {
    throw std::invalid_argument("log_density: dimension mismatch");
  }
  double acc = 0.0;
  for (int i = 0; i < mean.size(); ++i) {
    double diff = x[i] - mean[i];
    acc += kLog2Pi + log_var[i] + diff * diff * std::exp(-log_var[i]);
  }
  return -0.5 * acc;
}

double kl_to_standard_normal(const DiagonalGaussian& g) {
  double acc = 0.0;
  for (int i = 0; i < g.mean.size(); ++i) {
    acc += g.mean[i] * g.mean[i] + std::exp(g.log_var[i]) - g.log_var[i] - 1.0;
  }
  return 0.5 * acc;
}

Mat js_sample_plan(int num_samples, int dim, uint64_t seed) {
  if (num_samples < 1) throw std::invalid_argument("js_sample_plan: num_samples must be >= 1");
  RandomStream rng = RandomStream::fork(seed, {0x6a73706c616eULL});
  Mat plan(num_samples, dim);
  for (int r = 0; r < num_samples; r += 2) {
    for (int c = 0; c < dim; ++c) plan(r, c) = rng.normal();
    if (r + 1 < num_samples) plan.row(r + 1) = -plan.row(r);
  }
  return plan;
}

double js_divergence_with_plan(const DiagonalGaussian& g1, const DiagonalGaussian& g2,
                               const Mat& plan) {
  if (g1.dim() != g2.dim()) throw std::invalid_argument("js_divergence: dimension mismatch");
  if (plan.cols() != g1.dim()) throw std::invalid_argument("js_divergence: plan dimension mismatch");
  const Vec std1 = (0.5 * g1.log_var.array()).exp();
  const Vec std2 = (0.5 * g2.log_var.array()).exp();
  double term1 = 0.0, term2 = 0.0;
  Vec x(g1.dim());
  for (long r = 0; r < plan.rows(); ++r) {
    x = g1.mean.array() + std1.array() * plan.row(r).transpose().array();
    double la = g1.log_density(x), lb = g2.log_density(x);
    term1 += la - logmix2(la, lb);
    x = g2.mean.array() + std2.array() * plan.row(r).transpose().array();
    la = g1.log_density(x);
    lb = g2.log_density(x);
    term2 += lb - logmix2(la, lb);
  }
  const double n = static_cast<double>(plan.rows());
  double js = 0.5 * term1 / n + 0.5 * term2 / n;
  return std::clamp(js, 0.0, std::numbers::ln2);
}

double js_divergence(const DiagonalGaussian& g1, const DiagonalGaussian& g2, int num_samples,
                     uint64_t seed) {
  return js_divergence_with_plan(g1, g2, js_sample_plan(num_samples, g1.dim(), seed));
}

double softmin(double a, double b, double lambda_smooth) {
  if (!(lambda_smooth > 0)) throw std::invalid_argument("softmin: lambda_smooth must be > 0");
  double m = std::min(a, b);
  return m - std::log1p(std::exp(-lambda_smooth * std::abs(a - b))) / lambda_smooth;
}

// ---------------------------------------------------------------------------
// DiscreteJoint

DiscreteJoint::DiscreteJoint(std::vector<std::string> names, std::vector<int> cards,
                             std::vector<double> probs)
    : names_(std::move(names)), cards_(std::move(cards)), probs_(std::move(probs)) {
  if (names_.size() != cards_.size()) {
    throw std::invalid_argument("DiscreteJoint: names/cards size mismatch");
  }
  size_t cells = 1;
  for (int c : cards_) {
    if (c < 1) throw std::invalid_argument("DiscreteJoint: cardinalities must be >= 1");
    cells *= static_cast<size_t>(c);
    if (cells > 1000000) {
      throw std::invalid_argument("DiscreteJoint: table exceeds the 1e6-cell cap");
    }
  }
  if (probs_.size() != cells) {
    throw std::invalid_argument("DiscreteJoint: probability table has wrong size");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (p < 0) throw std::invalid_argument("DiscreteJoint: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteJoint: probabilities must sum to 1 within 1e-12");
  }
  strides_.assign(names_.size(), 1);
  for (int i = static_cast<int>(names_.size()) - 2; i >= 0; --i) {
    strides_[i] = strides_[i + 1] * cards_[i + 1];
  }
}

DiscreteJoint DiscreteJoint::random(std::vector<std::string> names, std::vector<int> cards,
                                    RandomStream& rng) {
  size_t cells = 1;
  for (int c : cards) cells *= static_cast<size_t>(c);
  std::vector<double> probs(cells);
  double sum = 0.0;
  for (double& p : probs) {
    // Exponential draws normalized: flat Dirichlet over the simplex.
    p = -std::log(1.0 - rng.uniform01());
    sum += p;
  }
  for (double& p : probs) p /= sum;
  // Renormalize once more against accumulated rounding.
  sum = 0.0;
  for (double p : probs) sum += p;
  for (double& p : probs) p /= sum;
  return DiscreteJoint(std::move(names), std::move(cards), std::move(probs));
}

int DiscreteJoint::var_index(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("DiscreteJoint: unknown variable '" + name + "'");
}

std::vector<int> DiscreteJoint::var_indices(const std::vector<std::string>& vars) const {
  std::vector<int> idx;
  idx.reserve(vars.size());
  for (const auto& v : vars) idx.push_back(var_index(v));
  return idx;
}

std::vector<double> DiscreteJoint::marginal(const std::vector<std::string>& vars) const {
  const std::vector<int> sel = var_indices(vars);
  size_t msize = 1;
  for (int vi : sel) msize *= static_cast<size_t>(cards_[vi]);
  std::vector<double> out(msize, 0.0);
  const size_t nvars = names_.size();
  std::vector<int> coord(nvars, 0);
  for (size_t cell = 0; cell < probs_.size(); ++cell) {
    size_t midx = 0;
    for (int vi : sel) midx = midx * static_cast<size_t>(cards_[vi]) + coord[vi];
    out[midx] += probs_[cell];
    // Advance mixed-radix coordinates.
    for (int d = static_cast<int>(nvars) - 1; d >= 0; --d) {
      if (++coord[d] < cards_[d]) break;
      coord[d] = 0;
    }
  }
  return out;
}

double DiscreteJoint::entropy(const std::vector<std::string>& vars) const {
  double h = 0.0;
  for (double p : marginal(vars)) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

double DiscreteJoint::mi(const std::vector<std::string>& a,
                         const std::vector<std::string>& b) const {
  for (const auto& va : a) {
    for (const auto& vb : b) {
      if (va == vb) {
        throw std::invalid_argument("mi: variable sets overlap on '" + va + "'");
      }
    }
  }
  return mi_overlap(a, b);
}

double DiscreteJoint::mi_overlap(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) const {
  // Union support, a-vars first then b-vars not already present.
  std::vector<std::string> uni = a;
  for (const auto& vb : b) {
    if (std::find(uni.begin(), uni.end(), vb) == uni.end()) uni.push_back(vb);
  }
  const std::vector<double> pu = marginal(uni);
  const std::vector<double> pa = marginal(a);
  const std::vector<double> pb = marginal(b);

  // Projections from a union-cell coordinate to the a-index and b-index.
  const std::vector<int> usel = var_indices(uni);
  std::vector<int> ucards(uni.size());
  for (size_t i = 0; i < uni.size(); ++i) ucards[i] = cards_[usel[i]];
  auto proj = [&](const std::vector<std::string>& vars, const std::vector<int>& coord) {
    size_t idx = 0;
    for (const auto& v : vars) {
      size_t pos = std::find(uni.begin(), uni.end(), v) - uni.begin();
      idx = idx * static_cast<size_t>(ucards[pos]) + static_cast<size_t>(coord[pos]);
    }
    return idx;
  };

  double mi_val = 0.0;
  std::vector<int> coord(uni.size(), 0);
  for (size_t cell = 0; cell < pu.size(); ++cell) {
    double p = pu[cell];
    if (p > 0) {
      mi_val += p * std::log(p / (pa[proj(a, coord)] * pb[proj(b, coord)]));
    }
    for (int d = static_cast<int>(uni.size()) - 1; d >= 0; --d) {
      if (++coord[d] < ucards[d]) break;
      coord[d] = 0;
    }
  }
  return mi_val;
}

double DiscreteJoint::conditional_mi(const std::vector<std::string>& a,
                                     const std::vector<std::string>& b,
                                     const std::vector<std::string>& cond) const {
  auto overlap = [](const std::vector<std::string>& x, const std::vector<std::string>& y) {
    for (const auto& vx : x) {
      for (const auto& vy : y) {
        if (vx == vy) return true;
      }
    }
    return false;
  };
  if (overlap(a, b) || overlap(a, cond) || overlap(b, cond)) {
    throw std::invalid_argument("conditional_mi: the three variable sets must be disjoint");
  }
  // Direct summation: sum p(abc) log( p(abc) p(c) / (p(ac) p(bc)) ).
  std::vector<std::string> abc = a;
  abc.insert(abc.end(), b.begin(), b.end());
  abc.insert(abc.end(), cond.begin(), cond.end());
  const std::vector<double> pabc = marginal(abc);
  std::vector<std::string> ac = a;
  ac.insert(ac.end(), cond.begin(), cond.end());
  std::vector<std::string> bc = b;
  bc.insert(bc.end(), cond.begin(), cond.end());
  const std::vector<double> pac = marginal(ac);
  const std::vector<double> pbc = marginal(bc);
  const std::vector<double> pc = marginal(cond);

  size_t sb = 1, sc = 1;
  for (int vi : var_indices(b)) sb *= static_cast<size_t>(cards_[vi]);
  for (int vi : var_indices(cond)) sc *= static_cast<size_t>(cards_[vi]);

  double cmi = 0.0;
  for (size_t cell = 0; cell < pabc.size(); ++cell) {
    double p = pabc[cell];
    if (p <= 0) continue;
    size_t ic = cell % sc;
    size_t ib = (cell / sc) % sb;
    size_t ia = cell / (sc * sb);
    cmi += p * std::log(p * pc[ic] / (pac[ia * sc + ic] * pbc[ib * sc + ic]));
  }
  return cmi;
}

double fano_disagreement_bound(double cond_entropy, int num_classes) {
  if (cond_entropy < 0) {
    throw std::invalid_argument("fano_disagreement_bound: conditional entropy must be >= 0");
  }
  if (num_classes <= 2) {
    throw std::invalid_argument(
        "fano_disagreement_bound: needs num_classes >= 3; the denominator log(C-1) degenerates "
        "at 2 classes");
  }
  return (cond_entropy - 1.0) / std::log(static_cast<double>(num_classes - 1));
}

}  // namespace nrib::infomath
