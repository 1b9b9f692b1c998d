#pragma once

// Diagonal-covariance Gaussian embeddings and the distance / similarity /
// mixing algebra consumed by every loss and inference routine.

#include <cstddef>
#include <string>
#include <vector>

#include "prolip/errors.hpp"
#include "prolip/prompt_weights.hpp"

namespace prolip {

enum class Modality { image, text };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

// N(mu, diag(exp(log_var))). Immutable after construction. Log-variances
// below the floor (including -inf) are clamped to it and the embedding is
// flagged degenerate; this keeps every variance strictly positive.
class GaussianEmbedding {
 public:
  static constexpr double kDefaultLogVarFloor = -30.0;
  static constexpr double kUnitNormTol = 1e-9;

  GaussianEmbedding(std::string id, std::vector<double> mu, std::vector<double> log_var,
                    double log_var_floor = kDefaultLogVarFloor);

  // L2-normalizes mu and flags the embedding `normalized`.
  static GaussianEmbedding normalized(std::string id, std::vector<double> mu,
                                      std::vector<double> log_var,
                                      double log_var_floor = kDefaultLogVarFloor);

  // Adopts mu as-is with an explicit flag; the flag is verified against the
  // actual norm so the normalized invariant cannot be forged.
  static GaussianEmbedding from_parts(std::string id, std::vector<double> mu,
                                      std::vector<double> log_var, bool is_normalized,
                                      double log_var_floor = kDefaultLogVarFloor);

  const std::string& id() const noexcept { return id_; }
  std::size_t dim() const noexcept { return mu_.size(); }
  const std::vector<double>& mu() const noexcept { return mu_; }
  const std::vector<double>& log_var() const noexcept { return log_var_; }
  double variance(std::size_t d) const;
  std::vector<double> variances() const;
  bool is_normalized() const noexcept { return normalized_; }
  bool variance_floored() const noexcept { return floored_; }

 private:
  GaussianEmbedding() = default;

  std::string id_;
  std::vector<double> mu_;
  std::vector<double> log_var_;
  bool normalized_ = false;
  bool floored_ = false;
};

// E||Z1 - Z2||^2 = ||mu1 - mu2||^2 + tr(S1 + S2). Symmetric, >= 0.
double csd(const GaussianEmbedding& z1, const GaussianEmbedding& z2);

// mu1.mu2 - tr(S1 + S2)/2. Requires both inputs flagged normalized; equals
// 1 - csd/2 exactly for unit means.
double csd_similarity(const GaussianEmbedding& z1, const GaussianEmbedding& z2);

// Prompt ensemble: arithmetic mean of the means and of the variances. The
// mean is not re-normalized unless `renormalize` is set.
GaussianEmbedding mix_prompts(const std::vector<GaussianEmbedding>& zs,
                              bool renormalize = false, std::string id = "");

// Convex-weighted ensemble: sum_i pi_i mu_i and sum_i pi_i sigma_i^2.
GaussianEmbedding weighted_mix(const std::vector<GaussianEmbedding>& zs,
                               const PromptWeights& pi, std::string id = "");

// tr(Sigma) = sum_d sigma^2[d].
double total_uncertainty(const GaussianEmbedding& z);

}  // namespace prolip
