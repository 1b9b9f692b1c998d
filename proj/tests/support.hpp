#pragma once

// Shared helpers for the test suites: deterministic random embeddings and
// batches. Everything draws from CounterRng so tests are reproducible.

#include <string>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/losses.hpp"
#include "prolip/rng.hpp"

namespace testsupport {

inline prolip::GaussianEmbedding random_embedding(prolip::CounterRng& rng, const std::string& id,
                                                  std::size_t dim, bool normalize,
                                                  double lv_lo = -3.0, double lv_hi = -0.5) {
  std::vector<double> mu(dim), lv(dim);
  for (double& x : mu) x = rng.next_normal();
  for (double& v : lv) v = lv_lo + (lv_hi - lv_lo) * rng.next_unit();
  return normalize ? prolip::GaussianEmbedding::normalized(id, mu, lv)
                   : prolip::GaussianEmbedding(id, mu, lv);
}

inline prolip::BatchItem random_item(prolip::CounterRng& rng, const std::string& id,
                                     std::size_t dim, double lv_lo = -3.0, double lv_hi = -0.5) {
  prolip::BatchItem item;
  item.id = id;
  item.raw_mu.resize(dim);
  item.log_var.resize(dim);
  for (double& x : item.raw_mu) x = rng.next_normal();
  for (double& v : item.log_var) v = lv_lo + (lv_hi - lv_lo) * rng.next_unit();
  return item;
}

// A small batch with images x texts grid, matched pairs, one masked link per
// modality and VIB over everything.
inline prolip::PairBatch random_batch(prolip::CounterRng& rng, std::size_t n_images,
                                      std::size_t n_texts, std::size_t dim) {
  prolip::PairBatch batch;
  for (std::size_t i = 0; i < n_images; ++i) {
    batch.items.push_back(random_item(rng, "img" + std::to_string(i), dim));
    batch.images.push_back(batch.items.size() - 1);
  }
  for (std::size_t j = 0; j < n_texts; ++j) {
    batch.items.push_back(random_item(rng, "txt" + std::to_string(j), dim));
    batch.texts.push_back(batch.items.size() - 1);
  }
  batch.labels.assign(n_images, std::vector<std::int8_t>(n_texts, -1));
  for (std::size_t i = 0; i < n_images; ++i) {
    for (std::size_t j = 0; j < n_texts; ++j) {
      const bool hit = rng.next_unit() < 0.4;
      batch.labels[i][j] = hit ? 1 : -1;
      if (hit) batch.matched.emplace_back(batch.images[i], batch.texts[j]);
    }
  }
  if (n_images >= 2) batch.masked_links.emplace_back(batch.images[0], batch.images[1]);
  if (n_texts >= 2) batch.masked_links.emplace_back(batch.texts[0], batch.texts[1]);
  batch.vib_items.resize(batch.items.size());
  for (std::size_t i = 0; i < batch.items.size(); ++i) batch.vib_items[i] = i;
  return batch;
}

}  // namespace testsupport
