// Acceptance suite: one criterion per block, one pass/fail line each, all
// tolerances pinned in code. Exits nonzero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hierarchy_fixture.hpp"
#include "prolip/bprw.hpp"
#include "prolip/inference.hpp"
#include "prolip/io.hpp"
#include "prolip/losses.hpp"
#include "prolip/oracles.hpp"
#include "prolip/rng.hpp"
#include "prolip/synth.hpp"
#include "support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace prolip;

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool g_all_pass = true;

void run_criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] %-34s %s (%.2fs)\n", outcome.pass ? "PASS" : "FAIL", name.c_str(),
              outcome.detail.c_str(), secs);
  std::fflush(stdout);
  g_all_pass = g_all_pass && outcome.pass;
}

// --- 1. inclusion-measure oracle agreement ---------------------------------

Outcome inclusion_oracle_agreement() {
  CounterRng rng(2024, 0);
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < 50; ++i) {
    const double mu1 = -3.0 + 6.0 * rng.next_unit();
    const double mu2 = -3.0 + 6.0 * rng.next_unit();
    const double v1 = 0.05 + 4.95 * rng.next_unit();
    const double v2 = 0.05 + 4.95 * rng.next_unit();
    const GaussianEmbedding z1("a", {mu1}, {std::log(v1)});
    const GaussianEmbedding z2("b", {mu2}, {std::log(v2)});
    const double diff =
        inc_measure(z1, z2, 1.0) - oracles::quadrature_log_inc(mu1, v1, mu2, v2);
    lo = std::min(lo, diff);
    hi = std::max(hi, diff);
  }
  const double spread = hi - lo;

  const double phi3 = std::exp(oracles::quadrature_log_inc(0.0, 1.0, 0.0, 1.0));
  const double expected = 1.0 / (2.0 * std::sqrt(3.0) * 3.14159265358979323846);
  const double rel = std::abs(phi3 - expected) / expected;

  return {spread < 1e-6 && rel < 1e-6,
          "offset spread " + io::format_double(spread) + ", phi^3 rel err " +
              io::format_double(rel)};
}

// --- 2. hypothesis-sign suite ------------------------------------------------

Outcome hypothesis_sign_suite() {
  int positive = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const double v1 = 0.05 + 0.45 * i;
      const double v2 = v1 * (1.1 + 0.5 * j);
      const double mu = -2.0 + 0.4 * i - 0.15 * j;
      const GaussianEmbedding z1("a", {mu}, {std::log(v1)});
      const GaussianEmbedding z2("b", {mu}, {std::log(v2)});
      if (inclusion_hypothesis(z1, z2, 1.0) > 0.0) ++positive;
    }
  }

  CounterRng rng(2025, 0);
  double worst_antisym = 0.0;
  bool zero_exact = true;
  for (int i = 0; i < 50; ++i) {
    const auto z1 = testsupport::random_embedding(rng, "a", 4, false);
    const auto z2 = testsupport::random_embedding(rng, "b", 4, false);
    worst_antisym = std::max(worst_antisym, std::abs(inclusion_hypothesis(z1, z2, 1.0) +
                                                     inclusion_hypothesis(z2, z1, 1.0)));
    zero_exact = zero_exact && inclusion_hypothesis(z1, z1, 1.0) == 0.0;
  }
  return {positive == 100 && worst_antisym < 1e-10 && zero_exact,
          "nested positives " + std::to_string(positive) + "/100, |H12+H21| max " +
              io::format_double(worst_antisym) + ", H(Z,Z)=0 " +
              (zero_exact ? "exact" : "violated")};
}

// --- 3. gradient correctness -------------------------------------------------

Outcome gradient_correctness() {
  CounterRng rng(2026, 0);
  double worst_rel = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n_img = 2 + rng.next_below(3);            // items = n_img + n_txt <= 8
    const std::size_t n_txt = 2 + rng.next_below(5 - n_img + 1);
    const std::size_t dim = 3 + rng.next_below(14);             // D <= 16
    const PairBatch batch = testsupport::random_batch(rng, n_img, n_txt, dim);
    LossParams params = LossParams::defaults();
    params.alpha1 = 0.2;
    params.alpha2 = 0.3;
    params.beta = 0.1;
    params.c = 3.0;
    params.eps_inc = 0.5;

    const ObjectiveGradient g = objective_grad(batch, params);

    std::vector<double> x;
    for (const auto& item : batch.items) {
      x.insert(x.end(), item.raw_mu.begin(), item.raw_mu.end());
      x.insert(x.end(), item.log_var.begin(), item.log_var.end());
    }
    x.push_back(params.a);
    x.push_back(params.b);
    const auto objective_at = [&](const std::vector<double>& q) {
      PairBatch probe = batch;
      LossParams p = params;
      std::size_t pos = 0;
      for (auto& item : probe.items) {
        for (double& v : item.raw_mu) v = q[pos++];
        for (double& v : item.log_var) v = q[pos++];
      }
      p.a = q[pos++];
      p.b = q[pos++];
      return total_objective(probe, p).total;
    };
    const std::vector<double> fd = oracles::finite_diff_grad(objective_at, x, 1e-5);

    std::vector<double> analytic;
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
      analytic.insert(analytic.end(), g.d_raw_mu[i].begin(), g.d_raw_mu[i].end());
      analytic.insert(analytic.end(), g.d_log_var[i].begin(), g.d_log_var[i].end());
    }
    analytic.push_back(g.d_a);
    analytic.push_back(g.d_b);

    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double scale = std::max({std::abs(fd[i]), std::abs(analytic[i]), 1e-6});
      worst_rel = std::max(worst_rel, std::abs(fd[i] - analytic[i]) / scale);
    }
  }
  return {worst_rel < 1e-4, "worst relative error " + io::format_double(worst_rel)};
}

// --- 4. loss algebra -----------------------------------------------------------

Outcome loss_algebra() {
  // ppcl zero logit
  const auto plus = GaussianEmbedding::normalized("p", {1.0, 0.0}, {-800.0, -800.0}, -800.0);
  const auto minus = GaussianEmbedding::normalized("m", {-1.0, 0.0}, {-800.0, -800.0}, -800.0);
  const double ln2_err =
      std::abs(ppcl(plus, minus, MatchLabel::positive, 10.0, -10.0) - std::log(2.0));

  CounterRng rng(2027, 0);
  double worst_identity = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto z1 = testsupport::random_embedding(rng, "a", 8, true);
    const auto z2 = testsupport::random_embedding(rng, "b", 8, true);
    worst_identity =
        std::max(worst_identity, std::abs(csd_similarity(z1, z2) - (1.0 - 0.5 * csd(z1, z2))));
  }

  int mc_hits = 0;
  for (int p = 0; p < 10; ++p) {
    const auto z1 = testsupport::random_embedding(rng, "a", 4, false);
    const auto z2 = testsupport::random_embedding(rng, "b", 4, false);
    const auto mc = oracles::mc_csd(z1, z2, 1000000, 3000 + static_cast<std::uint64_t>(p));
    if (std::abs(mc.estimate - csd(z1, z2)) < 3.0 * mc.std_error) ++mc_hits;
  }
  return {ln2_err < 1e-12 && worst_identity < 1e-12 && mc_hits == 10,
          "ln2 err " + io::format_double(ln2_err) + ", identity err " +
              io::format_double(worst_identity) + ", mc agreement " + std::to_string(mc_hits) +
              "/10"};
}

// --- 5. EM suite -----------------------------------------------------------------

Outcome em_suite() {
  using namespace prolip::bprw;

  // m_step with alpha = 1 is exactly N_n / M'
  Responsibilities resp;
  resp.gamma.assign(8, {0.25, 0.75});
  resp.degenerate_rows.assign(8, false);
  const auto ml = m_step(resp, 1.0);
  const bool ml_exact = ml.pi[0] == 0.25 && ml.pi[1] == 0.75;

  // MAP-EM monotonicity, 20 random instances for alpha in {2, 5}
  CounterRng rng(2028, 0);
  bool monotone = true;
  for (double alpha : {2.0, 5.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<GaussianEmbedding> prompts;
      const std::size_t n = 2 + rng.next_below(4);
      for (std::size_t p = 0; p < n; ++p) {
        prompts.push_back(
            testsupport::random_embedding(rng, "p" + std::to_string(p), 3, false, -1.5, 0.5));
      }
      Observations obs;
      const std::size_t m = 20 + rng.next_below(30);
      for (std::size_t j = 0; j < m; ++j) {
        obs.points.push_back(
            {2.0 * rng.next_normal(), 2.0 * rng.next_normal(), 2.0 * rng.next_normal()});
      }
      BprwConfig cfg;
      cfg.alpha = alpha;
      const auto result = run_bprw(prompts, obs, cfg);
      for (std::size_t i = 1; i < result.log_posterior.size(); ++i) {
        monotone = monotone && result.log_posterior[i] >= result.log_posterior[i - 1] - 1e-9;
      }
    }
  }

  // separated clusters concentrate and match the simplex grid search
  const std::vector<GaussianEmbedding> prompts = {
      GaussianEmbedding("close", {0.0, 0.0}, {std::log(0.5), std::log(0.5)}),
      GaussianEmbedding("far", {8.0, 8.0}, {std::log(0.5), std::log(0.5)})};
  Observations obs;
  for (int j = 0; j < 40; ++j) {
    obs.points.push_back({0.3 * rng.next_normal(), 0.3 * rng.next_normal()});
  }
  BprwConfig cfg;
  cfg.alpha = 2.0;
  cfg.tol = 1e-10;
  cfg.max_iters = 500;
  const auto result = run_bprw(prompts, obs, cfg);
  const auto stabilized = stabilize_prompts(prompts, cfg.eps_cov);
  double best_pi = -1.0, best_val = -1e300;
  for (int i = 0; i <= 1000; ++i) {
    const double p = static_cast<double>(i) / 1000.0;
    const double val =
        penalized_log_posterior(stabilized, obs, PromptWeights("c", {p, 1.0 - p}), cfg.alpha);
    if (val > best_val) {
      best_val = val;
      best_pi = p;
    }
  }
  const double grid_gap = std::abs(result.pi[0] - best_pi);
  return {ml_exact && monotone && result.pi[0] > 0.9 && grid_gap <= 1e-3 + 1e-9,
          std::string("alpha=1 exact ") + (ml_exact ? "yes" : "no") + ", monotone " +
              (monotone ? "yes" : "no") + ", pi1 " + io::format_double(result.pi[0]) +
              ", grid gap " + io::format_double(grid_gap)};
}

// --- 6. synthetic-training directionality ---------------------------------------

Outcome training_directionality() {
  using namespace prolip::synth;
  const SyntheticCorpus corpus = generate_corpus(32, 32, 8, 0);

  TrainerConfig cfg;
  cfg.dim = 16;
  cfg.learning_rate = 2e-4;
  cfg.steps = 2000;
  cfg.batch_size = 32;
  cfg.seed = 0;
  cfg.loss = LossParams::defaults();
  cfg.loss.alpha1 = 0.2;
  cfg.loss.alpha2 = 0.2;
  cfg.loss.beta = 1e-4;
  cfg.loss.c = 5.0;

  TrainerConfig baseline = cfg;
  baseline.loss.alpha1 = 0.0;

  const TrainResult with_inc = train(corpus, cfg);
  const TrainResult without_inc = train(corpus, baseline);

  const double sv = mean_uncertainty(corpus, with_inc.table, Modality::image);
  const double st = mean_uncertainty(corpus, with_inc.table, Modality::text);
  const double ratio = st / sv;
  const double base_ratio = mean_uncertainty(corpus, without_inc.table, Modality::text) /
                            mean_uncertainty(corpus, without_inc.table, Modality::image);
  const double masked = masked_inclusion_fraction(corpus, with_inc.table, cfg.loss.eps_inc);

  return {st > sv && base_ratio <= ratio && masked >= 0.7,
          "sigma_t2/sigma_v2 " + io::format_double(ratio) + " vs baseline " +
              io::format_double(base_ratio) + ", masked inclusion " + io::format_double(masked)};
}

// --- 7. traversal direction -------------------------------------------------------

Outcome traversal_direction() {
  using namespace prolip::inference;
  const auto h = hierfixture::build_hierarchy();
  const double eps = LossParams::eps_from_log(-10.0);

  std::vector<TraversalPath> inc_paths, null_paths;
  for (const auto& img : h.images) {
    inc_paths.push_back(traverse(img, h.pool, h.null_text, eps, 50, RootMode::inclusion_blend));
    null_paths.push_back(traverse(img, h.pool, h.null_text, eps, 50, RootMode::null_only));
  }
  const auto mi = traversal_metrics(inc_paths, h.ground_truth);
  const auto mn = traversal_metrics(null_paths, h.ground_truth);
  return {mi.precision > mn.precision && mi.root_recall > 0.0 && mn.root_recall == 0.0,
          "precision " + io::format_double(mi.precision) + " > " +
              io::format_double(mn.precision) + ", root recall " +
              io::format_double(mi.root_recall) + " vs " + io::format_double(mn.root_recall)};
}

// --- 8. CLI determinism --------------------------------------------------------------

Outcome cli_determinism() {
  const fs::path base = fs::temp_directory_path() /
                        ("prolip_acceptance_" +
                         std::to_string(CounterRng(::getpid(), 2).next_u64()));
  const fs::path a = base / "a", b = base / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  const std::string args =
      "train-synthetic --images 16 --texts 16 --attributes 8 --dim 8 --steps 100 --lr 0.005 "
      "--batch 16 --alpha1 0.05 --alpha2 0.05 --seed 17 --out run";
  auto run_in = [&](const fs::path& cwd) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" + PROLIP_CLI_PATH + "' " + args +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  if (run_in(a) != 0 || run_in(b) != 0) {
    fs::remove_all(base);
    return {false, "CLI run failed"};
  }
  bool identical = true;
  std::string first_diff;
  for (const char* name : {"run/corpus.jsonl", "run/embeddings.jsonl", "run/scalars.json",
                           "run/trace.csv", "run/manifest.json"}) {
    if (io::read_file((a / name).string()) != io::read_file((b / name).string())) {
      identical = false;
      if (first_diff.empty()) first_diff = name;
    }
  }
  fs::remove_all(base);
  return {identical, identical ? "5/5 artifacts byte-identical"
                               : "artifact differs: " + first_diff};
}

}  // namespace

int main() {
  run_criterion("inclusion-measure oracle", inclusion_oracle_agreement);
  run_criterion("hypothesis-sign suite", hypothesis_sign_suite);
  run_criterion("gradient correctness", gradient_correctness);
  run_criterion("loss algebra", loss_algebra);
  run_criterion("EM suite", em_suite);
  run_criterion("training directionality", training_directionality);
  run_criterion("traversal direction", traversal_direction);
  run_criterion("CLI determinism", cli_determinism);
  std::printf("%s\n", g_all_pass ? "ACCEPTANCE: ALL CRITERIA PASSED"
                                 : "ACCEPTANCE: CRITERIA FAILED");
  return g_all_pass ? 0 : 1;
}
