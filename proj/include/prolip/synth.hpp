#pragma once

// Synthetic many-to-many image-text corpora with masking structure, plus a
// free-parameter Gaussian-embedding trainer over the composite objective.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "prolip/gaussian.hpp"
#include "prolip/losses.hpp"

namespace prolip::synth {

struct CorpusItem {
  std::string id;
  std::vector<std::uint8_t> attributes;  // presence mask over n_attributes

  std::size_t attribute_count() const;
};

struct MaskedLink {
  std::string orig_id;
  std::string masked_id;
  Modality modality = Modality::image;
};

// Texts carry attribute subsets of the images they match; the match matrix
// is attribute containment, so it is many-to-many by construction. Masked
// variants keep a strict subset of their original's attributes.
struct SyntheticCorpus {
  int n_attributes = 0;
  std::vector<CorpusItem> images;
  std::vector<CorpusItem> texts;
  std::vector<CorpusItem> masked_images;
  std::vector<CorpusItem> masked_texts;
  std::vector<std::vector<std::uint8_t>> match;  // images x texts
  std::vector<MaskedLink> masked_links;

  double match_density() const;
  void validate() const;
};

bool attributes_contained(const CorpusItem& text, const CorpusItem& image);

// Brute-force containment recomputation, used by generation and as the
// independent check in tests.
std::vector<std::vector<std::uint8_t>> containment_match(const std::vector<CorpusItem>& images,
                                                         const std::vector<CorpusItem>& texts);

struct CorpusParams {
  double mask_pair_fraction = 0.125;  // share of items that get a masked variant
  double mask_ratio = 0.75;           // share of attributes removed in the variant
  int max_attempts = 100;
  double min_density = 0.02;
  double max_density = 0.5;
};

SyntheticCorpus generate_corpus(int n_images, int n_texts, int n_attributes,
                                std::uint64_t seed, const CorpusParams& params = {});

struct TrainerConfig {
  std::size_t dim = 16;
  double learning_rate = 1e-3;
  std::size_t steps = 1;
  std::size_t batch_size = 32;
  double mask_pair_fraction = 0.125;  // corpus-side fractions, kept for reports
  double mask_ratio = 0.75;
  double init_log_var = -10.0;
  double init_a = 10.0;
  double init_b = -10.0;
  LossParams loss = LossParams::defaults();
  std::uint64_t seed = 0;

  void validate() const;
};

// Free-parameter stand-in for the encoders: one raw mean and one log-variance
// vector per corpus item, plus the two contrastive scalars.
struct EmbeddingTable {
  std::vector<std::string> ids;
  std::vector<Modality> modalities;
  std::vector<std::uint8_t> is_masked_variant;
  std::vector<std::vector<double>> raw_mu;
  std::vector<std::vector<double>> log_var;
  double a = 10.0;
  double b = -10.0;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t index_of(const std::string& id) const;
  GaussianEmbedding embedding(std::size_t i) const;  // normalized view
};

EmbeddingTable init_table(const SyntheticCorpus& corpus, const TrainerConfig& cfg);

// The exact batch the trainer consumes at `step`, with the table indices its
// items came from. Deterministic in (corpus, cfg, step).
struct StepBatch {
  PairBatch batch;
  std::vector<std::size_t> table_indices;
};
StepBatch build_step_batch(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                           const TrainerConfig& cfg, std::size_t step);

struct StepRecord {
  std::size_t step = 0;
  double total = 0.0, ppcl = 0.0, inc_vt = 0.0, inc_mask = 0.0, vib = 0.0;
};

struct TrainResult {
  EmbeddingTable table;
  std::vector<StepRecord> trace;
  std::vector<std::string> warnings;
};

// Plain gradient descent on the composite objective; bitwise deterministic
// given (corpus, cfg).
TrainResult train(const SyntheticCorpus& corpus, const TrainerConfig& cfg);

struct AblationRow {
  std::string label;
  double final_loss = 0.0;
  double mean_sigma_v2 = 0.0;
  double mean_sigma_t2 = 0.0;
  double masked_inclusion_fraction = 0.0;
  double retrieval_top1 = 0.0;
};

// Trains each config on the same corpus; configs may differ only in their
// loss parameters.
std::vector<AblationRow> ablation_report(const SyntheticCorpus& corpus,
                                         const std::vector<TrainerConfig>& configs);

// Share of masked links with H(original in masked) > 0.
double masked_inclusion_fraction(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                                 double eps_inc);

// Top-1 nearest-text-by-CSD accuracy against the match matrix.
double retrieval_top1(const SyntheticCorpus& corpus, const EmbeddingTable& table);

double mean_uncertainty(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                        Modality modality);

}  // namespace prolip::synth
