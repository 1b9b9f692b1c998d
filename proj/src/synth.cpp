#include "prolip/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prolip/rng.hpp"

namespace prolip::synth {

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, CounterRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.next_below(i)]);
  }
  return idx;
}

// Keeps roughly (1 - mask_ratio) of the attributes, always a strict subset.
CorpusItem make_masked_variant(const CorpusItem& orig, double mask_ratio, CounterRng& rng) {
  std::vector<std::size_t> present;
  for (std::size_t a = 0; a < orig.attributes.size(); ++a) {
    if (orig.attributes[a]) present.push_back(a);
  }
  const auto n = present.size();
  auto keep = static_cast<std::size_t>(std::llround((1.0 - mask_ratio) * static_cast<double>(n)));
  if (keep >= n) keep = n - 1;  // strict subset
  for (std::size_t i = n; i > 1; --i) {
    std::swap(present[i - 1], present[rng.next_below(i)]);
  }
  CorpusItem masked;
  masked.id = orig.id + "/m";
  masked.attributes.assign(orig.attributes.size(), 0);
  for (std::size_t i = 0; i < keep; ++i) masked.attributes[present[i]] = 1;
  return masked;
}

}  // namespace

std::size_t CorpusItem::attribute_count() const {
  return static_cast<std::size_t>(std::count(attributes.begin(), attributes.end(), 1));
}

double SyntheticCorpus::match_density() const {
  if (images.empty() || texts.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& row : match) hits += static_cast<std::size_t>(std::count(row.begin(), row.end(), 1));
  return static_cast<double>(hits) / static_cast<double>(images.size() * texts.size());
}

bool attributes_contained(const CorpusItem& text, const CorpusItem& image) {
  if (text.attributes.size() != image.attributes.size()) {
    throw InvalidArgument("attributes_contained: attribute spaces differ");
  }
  for (std::size_t a = 0; a < text.attributes.size(); ++a) {
    if (text.attributes[a] && !image.attributes[a]) return false;
  }
  return true;
}

std::vector<std::vector<std::uint8_t>> containment_match(const std::vector<CorpusItem>& images,
                                                         const std::vector<CorpusItem>& texts) {
  std::vector<std::vector<std::uint8_t>> match(images.size(),
                                               std::vector<std::uint8_t>(texts.size(), 0));
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < texts.size(); ++j) {
      match[i][j] = attributes_contained(texts[j], images[i]) ? 1 : 0;
    }
  }
  return match;
}

void SyntheticCorpus::validate() const {
  if (n_attributes <= 0) throw InvalidArgument("SyntheticCorpus: n_attributes must be >= 1");
  auto check_item = [this](const CorpusItem& it) {
    if (it.attributes.size() != static_cast<std::size_t>(n_attributes)) {
      throw InvalidArgument("SyntheticCorpus: item '" + it.id + "' has wrong attribute size");
    }
  };
  for (const auto& it : images) check_item(it);
  for (const auto& it : texts) check_item(it);
  for (const auto& it : masked_images) check_item(it);
  for (const auto& it : masked_texts) check_item(it);
  if (match != containment_match(images, texts)) {
    throw InvalidArgument("SyntheticCorpus: match matrix inconsistent with containment");
  }
  auto find_in = [](const std::vector<CorpusItem>& items, const std::string& id) -> const CorpusItem* {
    for (const auto& it : items) {
      if (it.id == id) return &it;
    }
    return nullptr;
  };
  for (const auto& link : masked_links) {
    const bool is_img = link.modality == Modality::image;
    const CorpusItem* orig = find_in(is_img ? images : texts, link.orig_id);
    const CorpusItem* masked = find_in(is_img ? masked_images : masked_texts, link.masked_id);
    if (orig == nullptr || masked == nullptr) {
      throw InvalidArgument("SyntheticCorpus: dangling masked link " + link.orig_id);
    }
    // Strict subset: contained and strictly fewer attributes.
    if (!attributes_contained(*masked, *orig) ||
        masked->attribute_count() >= orig->attribute_count()) {
      throw InvalidArgument("SyntheticCorpus: masked item '" + link.masked_id +
                            "' is not a strict subset of its original");
    }
  }
}

SyntheticCorpus generate_corpus(int n_images, int n_texts, int n_attributes, std::uint64_t seed,
                                const CorpusParams& params) {
  if (n_attributes < 4) throw InvalidArgument("generate_corpus: n_attributes must be >= 4");
  if (n_images < 2 || n_texts < 2) throw InvalidArgument("generate_corpus: counts must be >= 2");
  if (!(params.mask_pair_fraction > 0.0 && params.mask_pair_fraction <= 1.0) ||
      !(params.mask_ratio > 0.0 && params.mask_ratio <= 1.0)) {
    throw InvalidArgument("generate_corpus: mask fractions must lie in (0, 1]");
  }
  if (params.max_attempts < 1) throw InvalidArgument("generate_corpus: max_attempts must be >= 1");

  const auto na = static_cast<std::size_t>(n_attributes);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    CounterRng rng(seed, static_cast<std::uint64_t>(attempt));
    SyntheticCorpus corpus;
    corpus.n_attributes = n_attributes;

    // Images carry about half the attribute vocabulary each.
    for (int i = 0; i < n_images; ++i) {
      CorpusItem item;
      item.id = "img_" + std::to_string(i);
      item.attributes.assign(na, 0);
      std::size_t count = 0;
      while (count == 0) {
        for (std::size_t a = 0; a < na; ++a) {
          item.attributes[a] = rng.next_unit() < 0.5 ? 1 : 0;
          count += item.attributes[a];
        }
      }
      corpus.images.push_back(std::move(item));
    }

    // Texts carry one to three attributes: fewer attributes means a more
    // general caption that matches more images.
    for (int j = 0; j < n_texts; ++j) {
      CorpusItem item;
      item.id = "txt_" + std::to_string(j);
      item.attributes.assign(na, 0);
      const std::size_t k = 1 + rng.next_below(3);
      std::vector<std::size_t> attrs(na);
      std::iota(attrs.begin(), attrs.end(), 0);
      for (std::size_t i = na; i > na - k; --i) {
        std::swap(attrs[i - 1], attrs[rng.next_below(i)]);
      }
      for (std::size_t i = na - k; i < na; ++i) item.attributes[attrs[i]] = 1;
      corpus.texts.push_back(std::move(item));
    }

    corpus.match = containment_match(corpus.images, corpus.texts);

    const double density = corpus.match_density();
    if (density < params.min_density || density > params.max_density) continue;

    // Many-to-many: a text matched by >= 2 images and an image matching >= 2 texts.
    bool text_many = false, image_many = false;
    for (std::size_t j = 0; j < corpus.texts.size() && !text_many; ++j) {
      std::size_t c = 0;
      for (std::size_t i = 0; i < corpus.images.size(); ++i) c += corpus.match[i][j];
      text_many = c >= 2;
    }
    for (std::size_t i = 0; i < corpus.images.size() && !image_many; ++i) {
      const auto c = static_cast<std::size_t>(
          std::count(corpus.match[i].begin(), corpus.match[i].end(), 1));
      image_many = c >= 2;
    }
    if (!text_many || !image_many) continue;

    // Masked variants for mask_pair_fraction of each modality.
    auto add_masked = [&](const std::vector<CorpusItem>& pool, std::vector<CorpusItem>& sink,
                          Modality modality) {
      const auto want = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::llround(params.mask_pair_fraction * static_cast<double>(pool.size()))));
      const std::vector<std::size_t> order = shuffled_indices(pool.size(), rng);
      for (std::size_t i = 0; i < want && i < pool.size(); ++i) {
        const CorpusItem& orig = pool[order[i]];
        sink.push_back(make_masked_variant(orig, params.mask_ratio, rng));
        corpus.masked_links.push_back({orig.id, sink.back().id, modality});
      }
    };
    add_masked(corpus.images, corpus.masked_images, Modality::image);
    add_masked(corpus.texts, corpus.masked_texts, Modality::text);

    corpus.validate();
    return corpus;
  }
  throw GenerationError("generate_corpus: density/many-to-many constraints unsatisfied after " +
                        std::to_string(params.max_attempts) + " attempts");
}

void TrainerConfig::validate() const {
  if (dim == 0) throw InvalidArgument("TrainerConfig: dim must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainerConfig: learning rate must be > 0");
  if (batch_size == 0) throw InvalidArgument("TrainerConfig: batch_size must be >= 1");
  if (!(mask_pair_fraction > 0.0 && mask_pair_fraction <= 1.0) ||
      !(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
    throw InvalidArgument("TrainerConfig: mask fractions must lie in (0, 1]");
  }
  if (!std::isfinite(init_log_var) || !std::isfinite(init_b) || !(init_a > 0.0)) {
    throw InvalidArgument("TrainerConfig: bad initial scalars");
  }
  loss.validate();
}

std::size_t EmbeddingTable::index_of(const std::string& id) const {
  const auto it = index.find(id);
  if (it == index.end()) throw InvalidArgument("EmbeddingTable: unknown id '" + id + "'");
  return it->second;
}

GaussianEmbedding EmbeddingTable::embedding(std::size_t i) const {
  return GaussianEmbedding::normalized(ids[i], raw_mu[i], log_var[i],
                                       std::min(GaussianEmbedding::kDefaultLogVarFloor,
                                                *std::min_element(log_var[i].begin(),
                                                                  log_var[i].end()) -
                                                    1.0));
}

EmbeddingTable init_table(const SyntheticCorpus& corpus, const TrainerConfig& cfg) {
  cfg.validate();
  corpus.validate();
  EmbeddingTable table;
  table.a = cfg.init_a;
  table.b = cfg.init_b;
  CounterRng rng(cfg.seed, 3);
  auto add_items = [&](const std::vector<CorpusItem>& items, Modality modality, bool masked) {
    for (const auto& it : items) {
      table.index[it.id] = table.ids.size();
      table.ids.push_back(it.id);
      table.modalities.push_back(modality);
      table.is_masked_variant.push_back(masked ? 1 : 0);
      std::vector<double> mu(cfg.dim);
      for (double& x : mu) x = rng.next_normal();
      table.raw_mu.push_back(std::move(mu));
      table.log_var.emplace_back(cfg.dim, cfg.init_log_var);
    }
  };
  add_items(corpus.images, Modality::image, false);
  add_items(corpus.texts, Modality::text, false);
  add_items(corpus.masked_images, Modality::image, true);
  add_items(corpus.masked_texts, Modality::text, true);
  return table;
}

StepBatch build_step_batch(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                           const TrainerConfig& cfg, std::size_t step) {
  StepBatch out;
  const std::size_t n_img = corpus.images.size();
  const std::size_t n_txt = corpus.texts.size();
  const std::size_t b_img = std::min(cfg.batch_size, n_img);
  const std::size_t b_txt = std::min(cfg.batch_size, n_txt);

  // Fixed cyclic orders derived from the seed; the batch at a given step is
  // a pure function of (corpus, cfg, step).
  CounterRng rng_img(cfg.seed, 1), rng_txt(cfg.seed, 2);
  const std::vector<std::size_t> img_order = shuffled_indices(n_img, rng_img);
  const std::vector<std::size_t> txt_order = shuffled_indices(n_txt, rng_txt);

  auto& batch = out.batch;
  std::unordered_map<std::size_t, std::size_t> local;  // table index -> batch index
  auto add_item = [&](std::size_t ti) -> std::size_t {
    const auto it = local.find(ti);
    if (it != local.end()) return it->second;
    const std::size_t bi = batch.items.size();
    batch.items.push_back({table.ids[ti], table.raw_mu[ti], table.log_var[ti]});
    out.table_indices.push_back(ti);
    local.emplace(ti, bi);
    return bi;
  };

  std::vector<std::size_t> batch_imgs, batch_txts;
  for (std::size_t j = 0; j < b_img; ++j) {
    batch_imgs.push_back(img_order[(step * b_img + j) % n_img]);
  }
  for (std::size_t j = 0; j < b_txt; ++j) {
    batch_txts.push_back(txt_order[(step * b_txt + j) % n_txt]);
  }

  for (std::size_t ci : batch_imgs) {
    batch.images.push_back(add_item(table.index_of(corpus.images[ci].id)));
  }
  for (std::size_t cj : batch_txts) {
    batch.texts.push_back(add_item(table.index_of(corpus.texts[cj].id)));
  }
  batch.labels.assign(b_img, std::vector<std::int8_t>(b_txt, -1));
  for (std::size_t r = 0; r < b_img; ++r) {
    for (std::size_t c = 0; c < b_txt; ++c) {
      const bool hit = corpus.match[batch_imgs[r]][batch_txts[c]] != 0;
      batch.labels[r][c] = hit ? 1 : -1;
      if (hit) batch.matched.emplace_back(batch.images[r], batch.texts[c]);
    }
  }

  // Masked links ride along whenever their original is in the batch.
  for (const auto& link : corpus.masked_links) {
    const std::size_t orig_ti = table.index_of(link.orig_id);
    if (!local.contains(orig_ti)) continue;
    const std::size_t masked_bi = add_item(table.index_of(link.masked_id));
    batch.masked_links.emplace_back(local.at(orig_ti), masked_bi);
  }

  batch.vib_items.resize(batch.items.size());
  std::iota(batch.vib_items.begin(), batch.vib_items.end(), 0);
  return out;
}

TrainResult train(const SyntheticCorpus& corpus, const TrainerConfig& cfg) {
  TrainResult result;
  result.table = init_table(corpus, cfg);
  EmbeddingTable& table = result.table;

  LossParams params = cfg.loss;
  std::size_t upticks = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    params.a = table.a;
    params.b = table.b;
    StepBatch sb = build_step_batch(corpus, table, cfg, step);

    ObjectiveValue value;
    ObjectiveGradient grad;
    try {
      value = total_objective(sb.batch, params);
      grad = objective_grad(sb.batch, params);
    } catch (const NumericError& e) {
      throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
    }
    result.trace.push_back({step, value.total, value.ppcl, value.inc_vt, value.inc_mask,
                            value.vib});
    if (step > 0 && value.total > result.trace[step - 1].total) ++upticks;

    for (std::size_t bi = 0; bi < sb.batch.items.size(); ++bi) {
      const std::size_t ti = sb.table_indices[bi];
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        table.raw_mu[ti][d] -= cfg.learning_rate * grad.d_raw_mu[bi][d];
        table.log_var[ti][d] -= cfg.learning_rate * grad.d_log_var[bi][d];
      }
    }
    table.a = std::max(table.a - cfg.learning_rate * grad.d_a, 1e-3);
    table.b -= cfg.learning_rate * grad.d_b;
  }

  if (cfg.steps > 1 && static_cast<double>(upticks) > 0.05 * static_cast<double>(cfg.steps)) {
    result.warnings.push_back("train: loss increased on " + std::to_string(upticks) + " of " +
                              std::to_string(cfg.steps) + " steps");
  }
  return result;
}

double masked_inclusion_fraction(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                                 double eps_inc) {
  if (corpus.masked_links.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& link : corpus.masked_links) {
    const GaussianEmbedding orig = table.embedding(table.index_of(link.orig_id));
    const GaussianEmbedding masked = table.embedding(table.index_of(link.masked_id));
    if (inclusion_hypothesis(orig, masked, eps_inc) > 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.masked_links.size());
}

double retrieval_top1(const SyntheticCorpus& corpus, const EmbeddingTable& table) {
  if (corpus.images.empty()) return 0.0;
  std::vector<GaussianEmbedding> texts;
  texts.reserve(corpus.texts.size());
  for (const auto& t : corpus.texts) texts.push_back(table.embedding(table.index_of(t.id)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    const GaussianEmbedding img = table.embedding(table.index_of(corpus.images[i].id));
    std::size_t best = 0;
    double best_dist = csd(img, texts[0]);
    for (std::size_t j = 1; j < texts.size(); ++j) {
      const double d = csd(img, texts[j]);
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (corpus.match[i][best]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.images.size());
}

double mean_uncertainty(const SyntheticCorpus& corpus, const EmbeddingTable& table,
                        Modality modality) {
  const auto& items = modality == Modality::image ? corpus.images : corpus.texts;
  if (items.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& it : items) {
    sum += total_uncertainty(table.embedding(table.index_of(it.id)));
  }
  return sum / static_cast<double>(items.size());
}

std::vector<AblationRow> ablation_report(const SyntheticCorpus& corpus,
                                         const std::vector<TrainerConfig>& configs) {
  if (configs.size() < 2) throw InvalidArgument("ablation_report: need at least two configs");
  const TrainerConfig& ref = configs.front();
  for (const auto& cfg : configs) {
    if (cfg.dim != ref.dim || cfg.learning_rate != ref.learning_rate || cfg.steps != ref.steps ||
        cfg.batch_size != ref.batch_size || cfg.seed != ref.seed ||
        cfg.init_log_var != ref.init_log_var || cfg.init_a != ref.init_a ||
        cfg.init_b != ref.init_b) {
      throw InvalidArgument("ablation_report: configs may differ only in loss parameters");
    }
  }
  std::vector<AblationRow> rows;
  for (const auto& cfg : configs) {
    const TrainResult run = train(corpus, cfg);
    AblationRow row;
    row.label = "alpha1=" + std::to_string(cfg.loss.alpha1) +
                ",alpha2=" + std::to_string(cfg.loss.alpha2) +
                ",beta=" + std::to_string(cfg.loss.beta);
    row.final_loss = run.trace.empty() ? 0.0 : run.trace.back().total;
    row.mean_sigma_v2 = mean_uncertainty(corpus, run.table, Modality::image);
    row.mean_sigma_t2 = mean_uncertainty(corpus, run.table, Modality::text);
    row.masked_inclusion_fraction =
        masked_inclusion_fraction(corpus, run.table, cfg.loss.eps_inc);
    row.retrieval_top1 = retrieval_top1(corpus, run.table);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace prolip::synth
