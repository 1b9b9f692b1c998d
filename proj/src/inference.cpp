#include "prolip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace prolip::inference {

namespace {

// argmin by CSD with lowest-index tie break.
std::size_t nearest_by_csd(const GaussianEmbedding& probe,
                           const std::vector<GaussianEmbedding>& pool) {
  std::size_t best = 0;
  double best_dist = csd(probe, pool[0]);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double d = csd(probe, pool[i]);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

ClassPromptSet ClassPromptSet::build(std::string class_id,
                                     std::vector<GaussianEmbedding> prompts) {
  if (prompts.empty()) throw InvalidArgument("ClassPromptSet: empty prompt list");
  GaussianEmbedding mixed = mix_prompts(prompts, false, class_id);
  return ClassPromptSet{std::move(class_id), std::move(prompts), std::move(mixed)};
}

ZscResult zsc_classify(const GaussianEmbedding& image,
                       const std::vector<ClassPromptSet>& classes) {
  if (classes.empty()) throw InvalidArgument("zsc_classify: empty class list");
  ZscResult out;
  out.scores.reserve(classes.size());
  for (const auto& cls : classes) out.scores.push_back(csd(image, cls.mixed));
  out.class_index = static_cast<std::size_t>(
      std::min_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  out.class_id = classes[out.class_index].class_id;
  return out;
}

std::vector<GaussianEmbedding> filter_prompts(const std::vector<GaussianEmbedding>& prompts,
                                              FilterStrategy strategy,
                                              std::optional<std::size_t> k,
                                              double sigma_multiplier) {
  if (prompts.empty()) throw InvalidArgument("filter_prompts: empty prompt list");
  std::vector<double> tu(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) tu[i] = total_uncertainty(prompts[i]);

  std::vector<GaussianEmbedding> kept;
  if (strategy == FilterStrategy::sigma_stats) {
    const double mean = std::accumulate(tu.begin(), tu.end(), 0.0) /
                        static_cast<double>(tu.size());
    double var = 0.0;
    for (double u : tu) var += (u - mean) * (u - mean);
    const double stddev = std::sqrt(var / static_cast<double>(tu.size()));
    const double threshold = mean + sigma_multiplier * stddev;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (tu[i] <= threshold) kept.push_back(prompts[i]);
    }
  } else {
    if (!k.has_value() || *k < 1 || *k > prompts.size()) {
      throw InvalidArgument("filter_prompts: top_k needs 1 <= k <= N");
    }
    std::vector<std::size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&tu](std::size_t a, std::size_t b) { return tu[a] < tu[b]; });
    std::unordered_set<std::size_t> selected(order.begin(),
                                             order.begin() + static_cast<std::ptrdiff_t>(*k));
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (selected.contains(i)) kept.push_back(prompts[i]);
    }
  }
  if (kept.empty()) {
    const std::size_t best = static_cast<std::size_t>(
        std::min_element(tu.begin(), tu.end()) - tu.begin());
    kept.push_back(prompts[best]);
  }
  return kept;
}

std::size_t find_root(const GaussianEmbedding& image,
                      const std::vector<GaussianEmbedding>& caption_pool, double eps_inc) {
  if (caption_pool.empty()) throw InvalidArgument("find_root: empty caption pool");
  std::size_t best = 0;
  double best_h = inclusion_hypothesis(image, caption_pool[0], eps_inc);
  for (std::size_t i = 1; i < caption_pool.size(); ++i) {
    const double h = inclusion_hypothesis(image, caption_pool[i], eps_inc);
    if (h > best_h) {
      best_h = h;
      best = i;
    }
  }
  return best;
}

GaussianEmbedding blend_root(const GaussianEmbedding& root, const GaussianEmbedding& null_text) {
  return mix_prompts({root, null_text}, false, "root");
}

TraversalPath traverse(const GaussianEmbedding& image,
                       const std::vector<GaussianEmbedding>& caption_pool,
                       const GaussianEmbedding& null_text, double eps_inc, int steps,
                       RootMode mode) {
  if (steps < 2) throw InvalidArgument("traverse: steps must be >= 2");
  if (caption_pool.empty()) throw InvalidArgument("traverse: empty caption pool");

  TraversalPath path;
  path.image_id = image.id();
  const std::size_t target = nearest_by_csd(image, caption_pool);
  path.target_caption_id = caption_pool[target].id();

  GaussianEmbedding root = null_text;
  if (mode == RootMode::inclusion_blend) {
    const std::size_t root_idx = find_root(image, caption_pool, eps_inc);
    path.root_caption_id = caption_pool[root_idx].id();
    root = blend_root(caption_pool[root_idx], null_text);
  }

  const std::size_t dim = root.dim();
  if (dim != caption_pool[target].dim()) throw InvalidArgument("traverse: dimension mismatch");

  std::unordered_set<std::string> seen;
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
    std::vector<double> mu(dim), lv(dim);
    double norm_sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      mu[d] = (1.0 - t) * root.mu()[d] + t * caption_pool[target].mu()[d];
      lv[d] = (1.0 - t) * root.log_var()[d] + t * caption_pool[target].log_var()[d];
      norm_sq += mu[d] * mu[d];
    }
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 1e-12)) {
      throw NumericError("traverse: interpolated mean collapsed to zero at t = " +
                         std::to_string(t));
    }
    for (double& x : mu) x /= norm;
    const double floor = std::min(GaussianEmbedding::kDefaultLogVarFloor,
                                  *std::min_element(lv.begin(), lv.end()) - 1.0);
    const GaussianEmbedding interp =
        GaussianEmbedding::from_parts("interp", std::move(mu), std::move(lv), true, floor);
    const std::size_t hit = nearest_by_csd(interp, caption_pool);
    path.steps.push_back({t, caption_pool[hit].id()});
    if (seen.insert(caption_pool[hit].id()).second) {
      path.unique_captions.push_back(caption_pool[hit].id());
    }
  }
  return path;
}

HierarchyEval eval_hierarchy_inclusion(
    const std::vector<std::pair<GaussianEmbedding, GaussianEmbedding>>& pairs, double eps_inc) {
  if (pairs.empty()) throw InvalidArgument("eval_hierarchy_inclusion: empty pair list");
  HierarchyEval out;
  out.h_values.reserve(pairs.size());
  std::size_t hits = 0;
  for (const auto& [specific, general] : pairs) {
    const double h = inclusion_hypothesis(specific, general, eps_inc);
    out.h_values.push_back(h);
    if (h > 0.0) ++hits;  // ties count as not included
  }
  out.fraction = static_cast<double>(hits) / static_cast<double>(pairs.size());
  return out;
}

TraversalMetrics traversal_metrics(const std::vector<TraversalPath>& paths,
                                   const GroundTruth& ground_truth) {
  if (paths.empty()) throw InvalidArgument("traversal_metrics: no paths");
  std::size_t retrieved = 0, relevant = 0, hits = 0, root_hits = 0;
  for (const auto& path : paths) {
    const auto it = ground_truth.find(path.image_id);
    if (it == ground_truth.end()) {
      throw InvalidArgument("traversal_metrics: missing ground truth for image '" +
                            path.image_id + "'");
    }
    const std::unordered_set<std::string> gt(it->second.begin(), it->second.end());
    retrieved += path.unique_captions.size();
    relevant += it->second.size();
    for (const auto& cap : path.unique_captions) {
      if (gt.contains(cap)) ++hits;
    }
    if (path.root_caption_id.has_value() && !it->second.empty() &&
        *path.root_caption_id == it->second.front()) {
      ++root_hits;
    }
  }
  TraversalMetrics m;
  m.precision = retrieved == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved);
  m.recall = relevant == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(relevant);
  m.root_recall = static_cast<double>(root_hits) / static_cast<double>(paths.size());
  return m;
}

}  // namespace prolip::inference
