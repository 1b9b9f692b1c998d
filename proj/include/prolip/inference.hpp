#pragma once

// Uncertainty-aware inference: prompt-ensemble zero-shot classification,
// sigma-based prompt filtering, inclusion-root discovery, interpolation
// traversal and hierarchy-inclusion evaluation.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/losses.hpp"

namespace prolip::inference {

struct ClassPromptSet {
  std::string class_id;
  std::vector<GaussianEmbedding> prompts;
  GaussianEmbedding mixed;  // mix_prompts cache

  static ClassPromptSet build(std::string class_id, std::vector<GaussianEmbedding> prompts);
};

struct ZscResult {
  std::string class_id;
  std::size_t class_index = 0;
  std::vector<double> scores;  // csd to each class mix, in class order
};

// argmin over classes of csd(image, class.mixed); ties to the lowest index.
ZscResult zsc_classify(const GaussianEmbedding& image,
                       const std::vector<ClassPromptSet>& classes);

enum class FilterStrategy { sigma_stats, top_k };

// sigma_stats drops prompts whose total uncertainty exceeds mean +
// multiplier * stddev of the set; top_k keeps the k least uncertain. Input
// order is preserved and the result is never empty.
std::vector<GaussianEmbedding> filter_prompts(const std::vector<GaussianEmbedding>& prompts,
                                              FilterStrategy strategy,
                                              std::optional<std::size_t> k = std::nullopt,
                                              double sigma_multiplier = 1.0);

// Index of the pool caption that includes the image most, i.e. argmax of
// H(image in caption); ties to the lowest index.
std::size_t find_root(const GaussianEmbedding& image,
                      const std::vector<GaussianEmbedding>& caption_pool, double eps_inc);

// Average of the discovered root and the null-text embedding.
GaussianEmbedding blend_root(const GaussianEmbedding& root, const GaussianEmbedding& null_text);

enum class RootMode { inclusion_blend, null_only };

struct TraversalStep {
  double t = 0.0;
  std::string caption_id;
};

struct TraversalPath {
  std::string image_id;
  std::optional<std::string> root_caption_id;  // find_root winner; absent in null_only mode
  std::string target_caption_id;
  std::vector<TraversalStep> steps;            // t strictly increasing, duplicates retained
  std::vector<std::string> unique_captions;    // first-appearance order
};

// Interpolates root -> nearest caption over `steps` equally spaced t values
// (means linearly then re-normalized, log-variances linearly), retrieving the
// CSD-nearest pool caption at each step.
TraversalPath traverse(const GaussianEmbedding& image,
                       const std::vector<GaussianEmbedding>& caption_pool,
                       const GaussianEmbedding& null_text, double eps_inc, int steps = 50,
                       RootMode mode = RootMode::inclusion_blend);

struct HierarchyEval {
  double fraction = 0.0;          // pairs with H(specific in general) strictly > 0
  std::vector<double> h_values;   // per pair, for histogram emission
};

HierarchyEval eval_hierarchy_inclusion(
    const std::vector<std::pair<GaussianEmbedding, GaussianEmbedding>>& pairs, double eps_inc);

// Caption ids per image, ordered most-general first.
using GroundTruth = std::unordered_map<std::string, std::vector<std::string>>;

struct TraversalMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double root_recall = 0.0;
};

TraversalMetrics traversal_metrics(const std::vector<TraversalPath>& paths,
                                   const GroundTruth& ground_truth);

}  // namespace prolip::inference
