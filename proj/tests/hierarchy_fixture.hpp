#pragma once

// Constructed 3-level caption hierarchy on the unit sphere: one object
// direction with specific / mid / general captions of increasing variance
// drifting toward the shared "null" direction, plus low-variance distractor
// captions near the null direction. Used by the inference tests and the
// acceptance suite.

#include <cmath>
#include <string>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/inference.hpp"

namespace hierfixture {

struct HierarchyCorpus {
  std::vector<prolip::GaussianEmbedding> pool;     // spec, mid, gen, distractors
  std::vector<prolip::GaussianEmbedding> images;   // three images near the object
  prolip::GaussianEmbedding null_text;
  prolip::inference::GroundTruth ground_truth;     // most-general first
};

inline HierarchyCorpus build_hierarchy() {
  constexpr int kDim = 8;
  const std::vector<double> u(kDim, 1.0 / std::sqrt(static_cast<double>(kDim)));
  auto dir = [&u](double toward_null, int jitter_axis, double jitter) {
    std::vector<double> m(kDim, 0.0);
    m[0] = 1.0;
    for (int d = 0; d < kDim; ++d) m[d] += toward_null * u[d];
    if (jitter_axis >= 0) m[static_cast<std::size_t>(jitter_axis)] += jitter;
    return m;
  };
  auto lv = [](double v) { return std::vector<double>(kDim, std::log(v)); };

  using prolip::GaussianEmbedding;
  HierarchyCorpus h{{},
                    {},
                    GaussianEmbedding::normalized("null", u, lv(0.3)),
                    {}};
  h.pool.push_back(GaussianEmbedding::normalized("spec", dir(0.1, -1, 0.0), lv(0.002)));
  h.pool.push_back(GaussianEmbedding::normalized("mid", dir(0.8, -1, 0.0), lv(0.01)));
  h.pool.push_back(GaussianEmbedding::normalized("gen", dir(1.4, -1, 0.0), lv(0.02)));
  for (int j = 0; j < 3; ++j) {
    std::vector<double> m = u;
    m[static_cast<std::size_t>(5 + j)] += 0.5;
    h.pool.push_back(GaussianEmbedding::normalized("distract" + std::to_string(j), m, lv(0.004)));
  }
  for (int i = 0; i < 3; ++i) {
    const std::string id = "img" + std::to_string(i);
    h.images.push_back(GaussianEmbedding::normalized(
        id, dir(0.05, 1 + i, 0.02 * static_cast<double>(i + 1)), lv(0.0005)));
    h.ground_truth[id] = {"gen", "mid", "spec"};
  }
  return h;
}

}  // namespace hierfixture
