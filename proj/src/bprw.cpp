#include "prolip/bprw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prolip/rng.hpp"

namespace prolip::bprw {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

// log(pi_n f_n(x)) rows; shared by the E-step and the posterior trace.
std::vector<double> log_weighted_densities(const std::vector<double>& x,
                                           const std::vector<GaussianEmbedding>& prompts,
                                           const PromptWeights& pi) {
  std::vector<double> l(prompts.size());
  for (std::size_t nn = 0; nn < prompts.size(); ++nn) {
    l[nn] = std::log(pi[nn]) + gaussian_logpdf(x, prompts[nn]);  // log(0) = -inf is fine
  }
  return l;
}

double log_sum_exp(const std::vector<double>& l) {
  const double m = *std::max_element(l.begin(), l.end());
  if (!std::isfinite(m)) return m;  // all -inf
  double s = 0.0;
  for (double v : l) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

void BprwConfig::validate() const {
  if (!(alpha > 0.0)) throw InvalidArgument("BprwConfig: alpha must be > 0");
  if (!(eps_cov > 0.0)) throw InvalidArgument("BprwConfig: eps_cov must be > 0");
  if (!(tol > 0.0)) throw InvalidArgument("BprwConfig: tol must be > 0");
  if (max_iters == 0) throw InvalidArgument("BprwConfig: max_iters must be >= 1");
  if (m == 0 || k == 0) throw InvalidArgument("BprwConfig: m and k must be >= 1");
}

double gaussian_logpdf(const std::vector<double>& x, const GaussianEmbedding& z) {
  if (x.size() != z.dim()) throw InvalidArgument("gaussian_logpdf: dimension mismatch");
  double s = 0.0;
  for (std::size_t d = 0; d < z.dim(); ++d) {
    const double lv = z.log_var()[d];
    const double diff = x[d] - z.mu()[d];
    s += -0.5 * (kLog2Pi + lv) - diff * diff / (2.0 * std::exp(lv));
  }
  return s;
}

Responsibilities e_step(const Observations& obs, const std::vector<GaussianEmbedding>& prompts,
                        const PromptWeights& pi) {
  if (prompts.empty()) throw InvalidArgument("e_step: no mixture components");
  if (pi.size() != prompts.size()) throw InvalidArgument("e_step: weight/prompt count mismatch");
  const std::size_t n = prompts.size();
  Responsibilities out;
  out.gamma.assign(obs.size(), std::vector<double>(n, 0.0));
  out.degenerate_rows.assign(obs.size(), false);
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const std::vector<double> l = log_weighted_densities(obs.points[j], prompts, pi);
    const double lse = log_sum_exp(l);
    if (!std::isfinite(lse)) {
      // Every weighted density vanished; spread the responsibility uniformly.
      std::fill(out.gamma[j].begin(), out.gamma[j].end(), 1.0 / static_cast<double>(n));
      out.degenerate_rows[j] = true;
      continue;
    }
    for (std::size_t c = 0; c < n; ++c) out.gamma[j][c] = std::exp(l[c] - lse);
  }
  return out;
}

MStepResult m_step(const Responsibilities& resp, double alpha, std::string class_id) {
  if (resp.gamma.empty()) throw InvalidArgument("m_step: empty responsibility matrix");
  const std::size_t n = resp.gamma.front().size();
  const double m_prime = static_cast<double>(resp.gamma.size());
  std::vector<double> counts(n, 0.0);
  for (const auto& row : resp.gamma) {
    if (row.size() != n) throw InvalidArgument("m_step: ragged responsibility matrix");
    for (std::size_t c = 0; c < n; ++c) counts[c] += row[c];
  }
  const double denom = m_prime + static_cast<double>(n) * (alpha - 1.0);
  bool fallback = false;
  std::vector<double> pi(n);
  if (denom <= 0.0) {
    // MAP denominator degenerates for small alpha; fall back to the
    // maximum-likelihood update.
    fallback = true;
    for (std::size_t c = 0; c < n; ++c) pi[c] = counts[c] / m_prime;
  } else {
    for (std::size_t c = 0; c < n; ++c) pi[c] = (counts[c] + alpha - 1.0) / denom;
  }
  double sum = 0.0;
  for (double& w : pi) {
    w = std::max(w, 0.0);
    sum += w;
  }
  if (sum <= 0.0) {
    std::fill(pi.begin(), pi.end(), 1.0 / static_cast<double>(n));
  } else {
    for (double& w : pi) w /= sum;
  }
  return {PromptWeights(std::move(class_id), std::move(pi)), fallback};
}

PromptWeights init_weights(const std::vector<GaussianEmbedding>& prompts, std::string class_id) {
  if (prompts.empty()) throw InvalidArgument("init_weights: no prompts");
  std::vector<double> inv(prompts.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const double tr = total_uncertainty(prompts[i]);
    if (!(tr > 0.0)) throw InvalidArgument("init_weights: prompt with non-positive uncertainty");
    inv[i] = 1.0 / tr;
    sum += inv[i];
  }
  for (double& w : inv) w /= sum;
  return PromptWeights(std::move(class_id), std::move(inv));
}

std::vector<GaussianEmbedding> stabilize_prompts(const std::vector<GaussianEmbedding>& prompts,
                                                 double eps_cov) {
  if (!(eps_cov > 0.0)) throw InvalidArgument("stabilize_prompts: eps_cov must be > 0");
  std::vector<GaussianEmbedding> out;
  out.reserve(prompts.size());
  for (const auto& z : prompts) {
    std::vector<double> lv(z.dim());
    for (std::size_t d = 0; d < z.dim(); ++d) lv[d] = std::log(std::exp(z.log_var()[d]) + eps_cov);
    out.push_back(GaussianEmbedding::from_parts(z.id(), z.mu(), std::move(lv),
                                                z.is_normalized()));
  }
  return out;
}

Observations collect_observations(const GaussianEmbedding& class_prompt_mix,
                                  const std::vector<GaussianEmbedding>& image_pool,
                                  const std::optional<std::vector<std::size_t>>& few_shot_members,
                                  const BprwConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (image_pool.empty()) throw InvalidArgument("collect_observations: empty image pool");
  const std::size_t dim = class_prompt_mix.dim();
  for (const auto& z : image_pool) {
    if (z.dim() != dim) throw InvalidArgument("collect_observations: dimension mismatch in pool");
  }

  std::vector<std::size_t> sources;
  std::size_t samples_each = cfg.k;
  Observations out;

  if (few_shot_members.has_value()) {
    if (few_shot_members->empty()) {
      throw InvalidArgument("collect_observations: few-shot mode needs labeled members");
    }
    for (std::size_t idx : *few_shot_members) {
      if (idx >= image_pool.size()) {
        throw InvalidArgument("collect_observations: labeled index out of range");
      }
      sources.push_back(idx);
    }
    // ceil(100 / K_true) samples from each labeled embedding.
    const std::size_t k_true = sources.size();
    samples_each = (100 + k_true - 1) / k_true;
  } else {
    std::size_t m = cfg.m;
    if (m > image_pool.size()) {
      out.warnings.push_back("collect_observations: pool smaller than m, shrinking " +
                             std::to_string(m) + " -> " + std::to_string(image_pool.size()));
      m = image_pool.size();
    }
    std::vector<std::size_t> order(image_pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> dist(image_pool.size());
    for (std::size_t i = 0; i < image_pool.size(); ++i) {
      dist[i] = csd(class_prompt_mix, image_pool[i]);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&dist](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    sources.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  }

  out.points.reserve(sources.size() * samples_each);
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const GaussianEmbedding& z = image_pool[sources[si]];
    std::vector<double> sd(dim);
    for (std::size_t d = 0; d < dim; ++d) sd[d] = std::exp(0.5 * z.log_var()[d]);
    CounterRng rng(seed, sources[si]);  // per-source substream
    for (std::size_t s = 0; s < samples_each; ++s) {
      std::vector<double> x(dim);
      for (std::size_t d = 0; d < dim; ++d) x[d] = z.mu()[d] + sd[d] * rng.next_normal();
      out.points.push_back(std::move(x));
    }
  }
  return out;
}

double penalized_log_posterior(const std::vector<GaussianEmbedding>& stabilized_prompts,
                               const Observations& obs, const PromptWeights& pi, double alpha) {
  double ll = 0.0;
  for (const auto& x : obs.points) {
    ll += log_sum_exp(log_weighted_densities(x, stabilized_prompts, pi));
  }
  if (alpha != 1.0) {
    for (std::size_t c = 0; c < pi.size(); ++c) ll += (alpha - 1.0) * std::log(pi[c]);
  }
  return ll;
}

BprwResult run_bprw(const std::vector<GaussianEmbedding>& prompts, const Observations& obs,
                    const BprwConfig& cfg) {
  cfg.validate();
  if (prompts.empty()) throw InvalidArgument("run_bprw: no prompts");
  if (obs.size() == 0) throw InvalidArgument("run_bprw: no observations");

  const std::vector<GaussianEmbedding> stabilized = stabilize_prompts(prompts, cfg.eps_cov);
  PromptWeights pi = init_weights(stabilized);

  BprwResult result{pi, {}, BprwStatus::max_iters, 0, false, obs.warnings};
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const Responsibilities resp = e_step(obs, stabilized, pi);
    MStepResult m = m_step(resp, cfg.alpha, pi.class_id());
    result.ml_fallback_used = result.ml_fallback_used || m.ml_fallback;

    double max_delta = 0.0;
    for (std::size_t c = 0; c < pi.size(); ++c) {
      max_delta = std::max(max_delta, std::abs(m.pi[c] - pi[c]));
    }
    pi = m.pi;
    const double lp = penalized_log_posterior(stabilized, obs, pi, cfg.alpha);
    if (!std::isfinite(lp)) {
      throw NumericError("run_bprw: non-finite log-posterior at iteration " +
                         std::to_string(iter));
    }
    result.log_posterior.push_back(lp);
    result.iterations = iter + 1;
    if (max_delta < cfg.tol) {
      result.status = BprwStatus::converged;
      break;
    }
  }
  result.pi = pi;
  return result;
}

}  // namespace prolip::bprw
