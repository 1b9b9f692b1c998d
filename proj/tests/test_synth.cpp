#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prolip/synth.hpp"

using namespace prolip;
using namespace prolip::synth;

namespace {

TrainerConfig directional_config() {
  TrainerConfig cfg;
  cfg.dim = 16;
  cfg.learning_rate = 2e-4;
  cfg.steps = 600;
  cfg.batch_size = 32;
  cfg.seed = 0;
  cfg.loss = LossParams::defaults();
  cfg.loss.alpha1 = 0.2;
  cfg.loss.alpha2 = 0.2;
  cfg.loss.beta = 1e-4;
  cfg.loss.c = 5.0;
  return cfg;
}

bool corpora_equal(const SyntheticCorpus& a, const SyntheticCorpus& b) {
  auto items_equal = [](const std::vector<CorpusItem>& x, const std::vector<CorpusItem>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].id != y[i].id || x[i].attributes != y[i].attributes) return false;
    }
    return true;
  };
  if (!items_equal(a.images, b.images) || !items_equal(a.texts, b.texts) ||
      !items_equal(a.masked_images, b.masked_images) ||
      !items_equal(a.masked_texts, b.masked_texts) || a.match != b.match ||
      a.masked_links.size() != b.masked_links.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.masked_links.size(); ++i) {
    if (a.masked_links[i].orig_id != b.masked_links[i].orig_id ||
        a.masked_links[i].masked_id != b.masked_links[i].masked_id ||
        a.masked_links[i].modality != b.masked_links[i].modality) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("generated corpora satisfy their structural contract") {
  const SyntheticCorpus corpus = generate_corpus(16, 16, 8, 3);

  CHECK(corpus.match == containment_match(corpus.images, corpus.texts));
  const double density = corpus.match_density();
  CHECK(density >= 0.02);
  CHECK(density <= 0.5);

  // many-to-many
  bool text_many = false, image_many = false;
  for (std::size_t j = 0; j < corpus.texts.size(); ++j) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) c += corpus.match[i][j];
    text_many = text_many || c >= 2;
  }
  for (const auto& row : corpus.match) {
    std::size_t c = 0;
    for (auto v : row) c += v;
    image_many = image_many || c >= 2;
  }
  CHECK(text_many);
  CHECK(image_many);

  // 12.5% of 16 rounds to 2 masked variants per modality
  CHECK(corpus.masked_images.size() == 2);
  CHECK(corpus.masked_texts.size() == 2);
  CHECK(corpus.masked_links.size() == 4);

  // strict subsets, revalidated from scratch
  for (const auto& link : corpus.masked_links) {
    const auto& originals = link.modality == Modality::image ? corpus.images : corpus.texts;
    const auto& masked_pool =
        link.modality == Modality::image ? corpus.masked_images : corpus.masked_texts;
    const CorpusItem* orig = nullptr;
    const CorpusItem* masked = nullptr;
    for (const auto& it : originals) {
      if (it.id == link.orig_id) orig = &it;
    }
    for (const auto& it : masked_pool) {
      if (it.id == link.masked_id) masked = &it;
    }
    REQUIRE(orig != nullptr);
    REQUIRE(masked != nullptr);
    CHECK(attributes_contained(*masked, *orig));
    CHECK(masked->attribute_count() < orig->attribute_count());
  }
}

TEST_CASE("generation is deterministic and validates its inputs") {
  const SyntheticCorpus a = generate_corpus(8, 8, 6, 11);
  const SyntheticCorpus b = generate_corpus(8, 8, 6, 11);
  CHECK(corpora_equal(a, b));

  const SyntheticCorpus c = generate_corpus(8, 8, 6, 12);
  CHECK_FALSE(corpora_equal(a, c));

  CHECK_THROWS_AS(generate_corpus(1, 8, 6, 0), InvalidArgument);
  CHECK_THROWS_AS(generate_corpus(8, 8, 3, 0), InvalidArgument);

  CorpusParams one_shot;
  one_shot.max_attempts = 1;  // 2x2 corpora rarely satisfy many-to-many in one draw
  CHECK_THROWS_AS(generate_corpus(2, 2, 4, 0, one_shot), GenerationError);
}

TEST_CASE("an empty-attribute text matches every image") {
  SyntheticCorpus corpus;
  corpus.n_attributes = 4;
  for (int i = 0; i < 3; ++i) {
    CorpusItem img;
    img.id = "img_" + std::to_string(i);
    img.attributes = {1, 0, 1, 0};
    img.attributes[static_cast<std::size_t>(i) % 4] = 1;
    corpus.images.push_back(img);
  }
  CorpusItem empty_text;
  empty_text.id = "txt_0";
  empty_text.attributes = {0, 0, 0, 0};
  corpus.texts.push_back(empty_text);
  corpus.match = containment_match(corpus.images, corpus.texts);
  for (const auto& row : corpus.match) CHECK(row[0] == 1);
  corpus.validate();
}

TEST_CASE("zero training steps leaves the table at its initialization") {
  const SyntheticCorpus corpus = generate_corpus(8, 8, 6, 2);
  TrainerConfig cfg = directional_config();
  cfg.steps = 0;
  const TrainResult res = train(corpus, cfg);
  CHECK(res.trace.empty());
  CHECK(res.table.a == 10.0);
  CHECK(res.table.b == -10.0);
  for (const auto& lv : res.table.log_var) {
    for (double v : lv) CHECK(v == -10.0);  // sigma^2 = exp(-10) ~ 5e-5
  }
}

TEST_CASE("one gradient step changes parameters by exactly -rate * gradient") {
  const SyntheticCorpus corpus = generate_corpus(6, 6, 6, 4);
  TrainerConfig cfg = directional_config();
  cfg.steps = 1;
  cfg.batch_size = 6;

  const EmbeddingTable before = init_table(corpus, cfg);
  const StepBatch sb = build_step_batch(corpus, before, cfg, 0);
  LossParams params = cfg.loss;
  params.a = before.a;
  params.b = before.b;
  const ObjectiveGradient grad = objective_grad(sb.batch, params);

  const TrainResult res = train(corpus, cfg);
  for (std::size_t bi = 0; bi < sb.batch.items.size(); ++bi) {
    const std::size_t ti = sb.table_indices[bi];
    for (std::size_t d = 0; d < cfg.dim; ++d) {
      CHECK(res.table.raw_mu[ti][d] ==
            before.raw_mu[ti][d] - cfg.learning_rate * grad.d_raw_mu[bi][d]);
      CHECK(res.table.log_var[ti][d] ==
            before.log_var[ti][d] - cfg.learning_rate * grad.d_log_var[bi][d]);
    }
  }
  CHECK(res.table.b == before.b - cfg.learning_rate * grad.d_b);
  CHECK(res.table.a == std::max(before.a - cfg.learning_rate * grad.d_a, 1e-3));
}

TEST_CASE("trace breakdown sums to the scalar loss at every step") {
  const SyntheticCorpus corpus = generate_corpus(8, 8, 6, 5);
  TrainerConfig cfg = directional_config();
  cfg.steps = 50;
  cfg.batch_size = 4;  // exercise cyclic mini-batches too
  const TrainResult res = train(corpus, cfg);
  REQUIRE(res.trace.size() == 50);
  for (const auto& rec : res.trace) {
    CHECK(std::abs(rec.total - (rec.ppcl + rec.inc_vt + rec.inc_mask + rec.vib)) < 1e-8);
  }
}

TEST_CASE("training is bitwise deterministic") {
  const SyntheticCorpus corpus = generate_corpus(8, 8, 6, 6);
  TrainerConfig cfg = directional_config();
  cfg.steps = 40;
  const TrainResult r1 = train(corpus, cfg);
  const TrainResult r2 = train(corpus, cfg);
  CHECK(r1.table.raw_mu == r2.table.raw_mu);
  CHECK(r1.table.log_var == r2.table.log_var);
  CHECK(r1.table.a == r2.table.a);
  CHECK(r1.table.b == r2.table.b);
  for (std::size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].total == r2.trace[i].total);
  }
}

TEST_CASE("loss trace is non-increasing at rate 1e-2 up to 5% transient upticks") {
  const SyntheticCorpus corpus = generate_corpus(32, 32, 8, 0);
  TrainerConfig cfg = directional_config();
  cfg.learning_rate = 1e-2;
  cfg.steps = 200;
  const TrainResult res = train(corpus, cfg);
  std::size_t upticks = 0;
  for (std::size_t i = 1; i < res.trace.size(); ++i) {
    if (res.trace[i].total > res.trace[i - 1].total) ++upticks;
  }
  CHECK(static_cast<double>(upticks) <= 0.05 * static_cast<double>(cfg.steps));
  CHECK(res.warnings.empty());  // the soft monitor stays quiet
}

TEST_CASE("inclusion weights drive the uncertainty ordering") {
  const SyntheticCorpus corpus = generate_corpus(32, 32, 8, 0);
  const TrainerConfig full = directional_config();
  TrainerConfig no_a1 = full;
  no_a1.loss.alpha1 = 0.0;
  TrainerConfig no_a2 = full;
  no_a2.loss.alpha2 = 0.0;

  const TrainResult run_full = train(corpus, full);
  const TrainResult run_no_a1 = train(corpus, no_a1);
  const TrainResult run_no_a2 = train(corpus, no_a2);

  // alpha1 > 0 flips the ordering toward texts being more uncertain
  const double full_ratio = mean_uncertainty(corpus, run_full.table, Modality::text) /
                            mean_uncertainty(corpus, run_full.table, Modality::image);
  const double base_ratio = mean_uncertainty(corpus, run_no_a1.table, Modality::text) /
                            mean_uncertainty(corpus, run_no_a1.table, Modality::image);
  CHECK(full_ratio > 1.0);
  CHECK(base_ratio <= full_ratio);

  // alpha2 > 0 raises the masked-inclusion satisfaction fraction
  const double with_a2 = masked_inclusion_fraction(corpus, run_full.table, full.loss.eps_inc);
  const double without_a2 =
      masked_inclusion_fraction(corpus, run_no_a2.table, no_a2.loss.eps_inc);
  CHECK(with_a2 > without_a2);
}

TEST_CASE("ablation report rows are deterministic and config-validated") {
  const SyntheticCorpus corpus = generate_corpus(16, 16, 8, 9);
  TrainerConfig cfg = directional_config();
  cfg.steps = 100;
  cfg.batch_size = 16;
  TrainerConfig baseline = cfg;
  baseline.loss.alpha1 = 0.0;
  baseline.loss.alpha2 = 0.0;

  const auto rows = ablation_report(corpus, {baseline, cfg, cfg});
  REQUIRE(rows.size() == 3);
  // identical configs produce identical rows
  CHECK(rows[1].final_loss == rows[2].final_loss);
  CHECK(rows[1].mean_sigma_v2 == rows[2].mean_sigma_v2);
  CHECK(rows[1].mean_sigma_t2 == rows[2].mean_sigma_t2);
  CHECK(rows[1].masked_inclusion_fraction == rows[2].masked_inclusion_fraction);
  CHECK(rows[1].retrieval_top1 == rows[2].retrieval_top1);
  CHECK(rows[0].label != rows[1].label);

  CHECK_THROWS_AS(ablation_report(corpus, {cfg}), InvalidArgument);
  TrainerConfig different = cfg;
  different.steps = 99;
  CHECK_THROWS_AS(ablation_report(corpus, {cfg, different}), InvalidArgument);
}
