#pragma once

// Probabilistic objectives: pairwise contrastive loss, inclusion
// measure / hypothesis / loss, VIB regularizer, the composite training
// objective and its analytic gradients.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prolip/gaussian.hpp"

namespace prolip {

enum class MatchLabel : int { positive = 1, negative = -1 };

MatchLabel match_label_from_int(int y);
inline int to_int(MatchLabel y) { return static_cast<int>(y); }

// Log-variance coefficients of the per-dimension log inclusion integral.
// `derived` carries the closed-form coefficients (-log s1^2 - log s2^2 / 2),
// the ones the quadrature oracle confirms; `printed` doubles both and exists
// only for auditing the alternative reading.
enum class InclusionForm { derived, printed };

// Scalar hyperparameters of the composite objective.
struct LossParams {
  double a = 10.0;      // contrastive logit scale, > 0
  double b = -10.0;     // contrastive logit bias
  double c = 10.0;      // inclusion-loss sharpness, > 0 (fixed, not learned)
  double eps_inc = 0.0; // multiplier applied to 1/sigma^2 inside A, B, C; > 0
  double alpha1 = 1e-7; // matched-pair inclusion weight
  double alpha2 = 1e-3; // masked-pair inclusion weight
  double beta = 1e-4;   // VIB weight
  InclusionForm form = InclusionForm::derived;

  static LossParams defaults();
  // eps is configured in log space; the effective multiplier is exp(eps_log).
  static double eps_from_log(double eps_log);
  void validate() const;
};

// max(x,0) + log1p(exp(-|x|)); no overflow for |x| up to ~1e308.
double softplus(double x);
double sigmoid(double x);

// Log-sigmoid pairwise loss on the scaled/shifted similarity logit.
double ppcl(const GaussianEmbedding& z_v, const GaussianEmbedding& z_t, MatchLabel y,
            double a, double b);

// Sum over dimensions of log int p1^2 p2 dx, parameter-independent constant
// omitted, with eps_inc/sigma^2 in place of 1/sigma^2 inside A, B, C.
double inc_measure(const GaussianEmbedding& z1, const GaussianEmbedding& z2, double eps_inc,
                   InclusionForm form = InclusionForm::derived);

// Additive constant dropped by inc_measure per dimension when eps_inc = 1:
// inc_measure + dim * this = log-integral.
double inc_measure_omitted_constant();

// H(Z1 in Z2) = inc(Z1,Z2) - inc(Z2,Z1); antisymmetric, constants cancel.
double inclusion_hypothesis(const GaussianEmbedding& z1, const GaussianEmbedding& z2,
                            double eps_inc, InclusionForm form = InclusionForm::derived);

// softplus(-c * H(Z1 in Z2)).
double inclusion_loss(const GaussianEmbedding& z1, const GaussianEmbedding& z2,
                      const LossParams& params);

// KL(N(mu, diag sigma^2) || N(0, I)) = sum_d (mu^2 + s^2 - log s^2 - 1) / 2.
double vib_loss(const GaussianEmbedding& z);

// One trainable item of a batch. Raw means are pre-normalization parameters;
// the objective L2-normalizes them internally, so gradients flow through the
// normalize map.
struct BatchItem {
  std::string id;
  std::vector<double> raw_mu;
  std::vector<double> log_var;
};

// Everything one evaluation of the composite objective consumes. `images`
// and `texts` index into `items` and span the contrastive grid; `matched`
// lists (v, t) pairs for the text-includes-image term; `masked_links` lists
// (original, masked) pairs on either modality; `vib_items` receive the
// regularizer.
struct PairBatch {
  std::vector<BatchItem> items;
  std::vector<std::size_t> images;
  std::vector<std::size_t> texts;
  std::vector<std::vector<std::int8_t>> labels;  // +1 / -1, images x texts
  std::vector<std::pair<std::size_t, std::size_t>> matched;
  std::vector<std::pair<std::size_t, std::size_t>> masked_links;
  std::vector<std::size_t> vib_items;

  void validate() const;
};

// Scalar objective plus its weighted per-term breakdown; the four terms sum
// to `total` exactly up to rounding.
struct ObjectiveValue {
  double total = 0.0;
  double ppcl = 0.0;
  double inc_vt = 0.0;
  double inc_mask = 0.0;
  double vib = 0.0;
  std::vector<std::string> warnings;
};

struct ObjectiveGradient {
  std::vector<std::vector<double>> d_raw_mu;   // per item, through L2-normalize
  std::vector<std::vector<double>> d_log_var;  // per item
  double d_a = 0.0;
  double d_b = 0.0;
};

ObjectiveValue total_objective(const PairBatch& batch, const LossParams& params);
ObjectiveGradient objective_grad(const PairBatch& batch, const LossParams& params);

}  // namespace prolip
