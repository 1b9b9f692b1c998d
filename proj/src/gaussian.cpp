#include "prolip/gaussian.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <utility>

namespace prolip {

namespace {

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_same_dim(const GaussianEmbedding& z1, const GaussianEmbedding& z2,
                      const char* op) {
  if (z1.dim() != z2.dim()) {
    throw InvalidArgument(std::string(op) + ": dimension mismatch (" +
                          std::to_string(z1.dim()) + " vs " + std::to_string(z2.dim()) + ")");
  }
}

}  // namespace

const char* to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

Modality modality_from_string(const std::string& s) {
  if (s == "image") return Modality::image;
  if (s == "text") return Modality::text;
  throw InvalidArgument("unknown modality: " + s);
}

GaussianEmbedding::GaussianEmbedding(std::string id, std::vector<double> mu,
                                     std::vector<double> log_var, double log_var_floor)
    : id_(std::move(id)), mu_(std::move(mu)), log_var_(std::move(log_var)) {
  if (mu_.empty() || mu_.size() != log_var_.size()) {
    throw InvalidArgument("embedding '" + id_ + "': mu and log_var must share dimension >= 1");
  }
  if (!std::isfinite(log_var_floor)) {
    throw InvalidArgument("embedding '" + id_ + "': log_var floor must be finite");
  }
  for (double x : mu_) {
    if (!std::isfinite(x)) throw InvalidArgument("embedding '" + id_ + "': non-finite mu entry");
  }
  for (double& v : log_var_) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw InvalidArgument("embedding '" + id_ + "': log_var entry is NaN or +inf");
    }
    if (v < log_var_floor) {  // -inf lands here and is capped
      v = log_var_floor;
      floored_ = true;
    }
  }
}

GaussianEmbedding GaussianEmbedding::normalized(std::string id, std::vector<double> mu,
                                                std::vector<double> log_var,
                                                double log_var_floor) {
  GaussianEmbedding z(std::move(id), std::move(mu), std::move(log_var), log_var_floor);
  const double n = l2_norm(z.mu_);
  if (n <= 0.0 || !std::isfinite(n)) {
    throw InvalidArgument("embedding '" + z.id_ + "': cannot normalize zero-norm mu");
  }
  for (double& x : z.mu_) x /= n;
  z.normalized_ = true;
  return z;
}

GaussianEmbedding GaussianEmbedding::from_parts(std::string id, std::vector<double> mu,
                                                std::vector<double> log_var, bool is_normalized,
                                                double log_var_floor) {
  GaussianEmbedding z(std::move(id), std::move(mu), std::move(log_var), log_var_floor);
  if (is_normalized) {
    const double n = l2_norm(z.mu_);
    if (std::abs(n - 1.0) > kUnitNormTol) {
      throw InvalidArgument("embedding '" + z.id_ + "': normalized flag set but ||mu|| = " +
                            std::to_string(n));
    }
    z.normalized_ = true;
  }
  return z;
}

double GaussianEmbedding::variance(std::size_t d) const { return std::exp(log_var_[d]); }

std::vector<double> GaussianEmbedding::variances() const {
  std::vector<double> v(log_var_.size());
  for (std::size_t d = 0; d < log_var_.size(); ++d) v[d] = std::exp(log_var_[d]);
  return v;
}

double csd(const GaussianEmbedding& z1, const GaussianEmbedding& z2) {
  require_same_dim(z1, z2, "csd");
  double mean_sq = 0.0, var_sum = 0.0;
  for (std::size_t d = 0; d < z1.dim(); ++d) {
    const double diff = z1.mu()[d] - z2.mu()[d];
    mean_sq += diff * diff;
    var_sum += std::exp(z1.log_var()[d]) + std::exp(z2.log_var()[d]);
  }
  return mean_sq + var_sum;
}

double csd_similarity(const GaussianEmbedding& z1, const GaussianEmbedding& z2) {
  require_same_dim(z1, z2, "csd_similarity");
  if (!z1.is_normalized() || !z2.is_normalized()) {
    throw InvalidArgument("csd_similarity: both embeddings must be normalized");
  }
  assert(std::abs(l2_norm(z1.mu()) - 1.0) <= 1e-9);
  assert(std::abs(l2_norm(z2.mu()) - 1.0) <= 1e-9);
  double dot = 0.0, var_sum = 0.0;
  for (std::size_t d = 0; d < z1.dim(); ++d) {
    dot += z1.mu()[d] * z2.mu()[d];
    var_sum += std::exp(z1.log_var()[d]) + std::exp(z2.log_var()[d]);
  }
  return dot - 0.5 * var_sum;
}

GaussianEmbedding mix_prompts(const std::vector<GaussianEmbedding>& zs, bool renormalize,
                              std::string id) {
  if (zs.empty()) throw InvalidArgument("mix_prompts: empty prompt list");
  const std::size_t dim = zs.front().dim();
  for (const auto& z : zs) {
    if (z.dim() != dim) throw InvalidArgument("mix_prompts: dimension mismatch");
  }
  std::vector<double> mu(dim, 0.0), var(dim, 0.0);
  for (const auto& z : zs) {
    for (std::size_t d = 0; d < dim; ++d) {
      mu[d] += z.mu()[d];
      var[d] += std::exp(z.log_var()[d]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(zs.size());
  std::vector<double> log_var(dim);
  double min_finite_lv = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    mu[d] *= inv_n;
    log_var[d] = std::log(var[d] * inv_n);  // -inf when the variances underflowed
    if (std::isfinite(log_var[d])) min_finite_lv = std::min(min_finite_lv, log_var[d]);
  }
  if (id.empty()) id = zs.size() == 1 ? zs.front().id() : "mix";
  // Floor below every finite entry so mixing never re-clamps live variances;
  // underflowed entries cap at the floor like any other degenerate input.
  const double floor = std::min(GaussianEmbedding::kDefaultLogVarFloor, min_finite_lv - 1.0);
  if (renormalize) return GaussianEmbedding::normalized(std::move(id), std::move(mu),
                                                        std::move(log_var), floor);
  const bool unit = std::abs(l2_norm(mu) - 1.0) <= GaussianEmbedding::kUnitNormTol;
  return GaussianEmbedding::from_parts(std::move(id), std::move(mu), std::move(log_var), unit,
                                       floor);
}

GaussianEmbedding weighted_mix(const std::vector<GaussianEmbedding>& zs, const PromptWeights& pi,
                               std::string id) {
  if (zs.empty()) throw InvalidArgument("weighted_mix: empty prompt list");
  if (pi.size() != zs.size()) {
    throw InvalidArgument("weighted_mix: " + std::to_string(pi.size()) + " weights for " +
                          std::to_string(zs.size()) + " embeddings");
  }
  const std::size_t dim = zs.front().dim();
  for (const auto& z : zs) {
    if (z.dim() != dim) throw InvalidArgument("weighted_mix: dimension mismatch");
  }
  std::vector<double> mu(dim, 0.0), var(dim, 0.0);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double w = pi[i];
    for (std::size_t d = 0; d < dim; ++d) {
      mu[d] += w * zs[i].mu()[d];
      var[d] += w * std::exp(zs[i].log_var()[d]);
    }
  }
  std::vector<double> log_var(dim);
  double min_finite_lv = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    log_var[d] = std::log(var[d]);
    if (std::isfinite(log_var[d])) min_finite_lv = std::min(min_finite_lv, log_var[d]);
  }
  if (id.empty()) id = "mix:" + pi.class_id();
  const double floor = std::min(GaussianEmbedding::kDefaultLogVarFloor, min_finite_lv - 1.0);
  const bool unit = std::abs(l2_norm(mu) - 1.0) <= GaussianEmbedding::kUnitNormTol;
  return GaussianEmbedding::from_parts(std::move(id), std::move(mu), std::move(log_var), unit,
                                       floor);
}

double total_uncertainty(const GaussianEmbedding& z) {
  double s = 0.0;
  for (double lv : z.log_var()) s += std::exp(lv);
  return s;
}

PromptWeights::PromptWeights(std::string class_id, std::vector<double> pi)
    : class_id_(std::move(class_id)), pi_(std::move(pi)) {
  if (pi_.empty()) throw InvalidArgument("PromptWeights: empty weight vector");
  double sum = 0.0;
  for (double w : pi_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidArgument("PromptWeights '" + class_id_ + "': weights must be finite and >= 0");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw InvalidArgument("PromptWeights '" + class_id_ + "': weights sum to " +
                          std::to_string(sum));
  }
}

PromptWeights PromptWeights::uniform(std::string class_id, std::size_t n) {
  if (n == 0) throw InvalidArgument("PromptWeights::uniform: n must be >= 1");
  return PromptWeights(std::move(class_id),
                       std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

}  // namespace prolip
