#pragma once

// Bayesian prompt re-weighting: MAP EM over a diagonal-Gaussian mixture with
// a Dirichlet prior on the mixing proportions. Component means and
// covariances stay fixed; only the proportions update.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/prompt_weights.hpp"

namespace prolip::bprw {

struct Observations {
  std::vector<std::vector<double>> points;  // M' x D
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return points.size(); }
  std::size_t dim() const noexcept { return points.empty() ? 0 : points.front().size(); }
};

struct BprwConfig {
  double alpha = 5.0;       // Dirichlet concentration (zero-shot default; 2 for few-shot)
  double eps_cov = 0.02;    // added to every prompt variance before densities
  std::size_t m = 5;        // images per class in zero-shot KNN collection
  std::size_t k = 20;       // samples per selected image (m * k = 100 points)
  std::size_t max_iters = 200;
  double tol = 1e-6;        // convergence threshold on max |delta pi|

  void validate() const;
};

// Diagonal-Gaussian log density, summed over dimensions.
double gaussian_logpdf(const std::vector<double>& x, const GaussianEmbedding& z);

struct Responsibilities {
  std::vector<std::vector<double>> gamma;  // M' x N, each row sums to 1
  std::vector<bool> degenerate_rows;       // rows that fell back to uniform
};

// gamma_jn = pi_n f_n(x_j) / sum_i pi_i f_i(x_j), computed in log space with
// a per-row max shift.
Responsibilities e_step(const Observations& obs, const std::vector<GaussianEmbedding>& prompts,
                        const PromptWeights& pi);

struct MStepResult {
  PromptWeights pi;
  bool ml_fallback = false;  // degenerate MAP denominator, used N_n / M'
};

// pi_n = (N_n + alpha - 1) / (M' + N (alpha - 1)), clamped to >= 0 and
// renormalized.
MStepResult m_step(const Responsibilities& resp, double alpha, std::string class_id = "");

// pi_n proportional to 1 / tr(Sigma_n).
PromptWeights init_weights(const std::vector<GaussianEmbedding>& prompts,
                           std::string class_id = "");

// Stabilized copies: Sigma + eps_cov * I.
std::vector<GaussianEmbedding> stabilize_prompts(const std::vector<GaussianEmbedding>& prompts,
                                                 double eps_cov);

// Zero-shot mode (no member indices): the m pool embeddings nearest to the
// class mix by CSD, k samples each. Few-shot mode: ceil(100 / |members|)
// samples from each labeled embedding.
Observations collect_observations(const GaussianEmbedding& class_prompt_mix,
                                  const std::vector<GaussianEmbedding>& image_pool,
                                  const std::optional<std::vector<std::size_t>>& few_shot_members,
                                  const BprwConfig& cfg, std::uint64_t seed);

enum class BprwStatus { converged, max_iters };

struct BprwResult {
  PromptWeights pi;
  std::vector<double> log_posterior;  // penalized, one entry per iteration
  BprwStatus status = BprwStatus::max_iters;
  std::size_t iterations = 0;
  bool ml_fallback_used = false;
  std::vector<std::string> warnings;
};

BprwResult run_bprw(const std::vector<GaussianEmbedding>& prompts, const Observations& obs,
                    const BprwConfig& cfg);

// Mixture log-likelihood plus the Dirichlet log prior (its normalizing
// constant omitted); the quantity traced across EM iterations.
double penalized_log_posterior(const std::vector<GaussianEmbedding>& stabilized_prompts,
                               const Observations& obs, const PromptWeights& pi, double alpha);

}  // namespace prolip::bprw
