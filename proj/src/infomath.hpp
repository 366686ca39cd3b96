#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace nrib {
class RandomStream;
}

namespace nrib::infomath {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kLogVarClamp = 10.0;

// Per-sample latent distribution. log_var is clamped to [-10, 10] on
// construction; all quantities are in nats.
struct DiagonalGaussian {
  Vec mean;
  Vec log_var;

  DiagonalGaussian(Vec mean_in, Vec log_var_in);
  int dim() const { return static_cast<int>(mean.size()); }
  double log_density(const Vec& x) const;
};

// Closed form: 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1).
double kl_to_standard_normal(const DiagonalGaussian& g);

// Antithetic standard-normal draws: row 2i+1 is the reflection of row 2i.
Mat js_sample_plan(int num_samples, int dim, uint64_t seed);

// Monte-Carlo Jensen-Shannon divergence, clamped to [0, log 2]. The same
// draw plan is applied to both distributions, which makes the estimate
// exactly symmetric under argument swap for a fixed seed.
double js_divergence(const DiagonalGaussian& g1, const DiagonalGaussian& g2, int num_samples,
                     uint64_t seed);
double js_divergence_with_plan(const DiagonalGaussian& g1, const DiagonalGaussian& g2,
                               const Mat& plan);

// Smooth minimum: -(1/lambda) * log(exp(-lambda a) + exp(-lambda b)).
// Satisfies min(a,b) - log(2)/lambda <= softmin <= min(a,b).
double softmin(double a, double b, double lambda_smooth);

// Exact joint distribution over named finite variables; the brute-force
// oracle behind every mutual-information bound check. Dense tables are
// capped at 1e6 cells.
class DiscreteJoint {
 public:
  DiscreteJoint(std::vector<std::string> names, std::vector<int> cards,
                std::vector<double> probs);

  static DiscreteJoint random(std::vector<std::string> names, std::vector<int> cards,
                              nrib::RandomStream& rng);

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<int>& cards() const { return cards_; }
  const std::vector<double>& probs() const { return probs_; }
  size_t num_cells() const { return probs_.size(); }

  // Marginal table over `vars`, row-major in the order given.
  std::vector<double> marginal(const std::vector<std::string>& vars) const;

  double entropy(const std::vector<std::string>& vars) const;
  // Mutual information between disjoint variable sets, in nats.
  double mi(const std::vector<std::string>& a, const std::vector<std::string>& b) const;
  // MI between composite variables that may share components, e.g. I(S,Y; T,Y).
  double mi_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) const;
  double conditional_mi(const std::vector<std::string>& a, const std::vector<std::string>& b,
                        const std::vector<std::string>& cond) const;

 private:
  int var_index(const std::string& name) const;
  std::vector<int> var_indices(const std::vector<std::string>& vars) const;

  std::vector<std::string> names_;
  std::vector<int> cards_;
  std::vector<int> strides_;
  std::vector<double> probs_;
};

// Theorem-style disagreement lower bound (H(Y'|D) - 1) / log(C - 1).
// May be negative (vacuous); callers clamp at zero for reporting.
double fano_disagreement_bound(double cond_entropy, int num_classes);

}  // namespace nrib::infomath
