// Command-line surface tying the library into reproducible experiments.
// Every run draws all randomness from --seed and writes one manifest next to
// its artifacts, so identical invocations produce byte-identical outputs.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prolip/bprw.hpp"
#include "prolip/gaussian.hpp"
#include "prolip/inference.hpp"
#include "prolip/io.hpp"
#include "prolip/losses.hpp"
#include "prolip/oracles.hpp"
#include "prolip/rng.hpp"
#include "prolip/synth.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using prolip::io::format_double;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

struct CommonOpts {
  std::string out_dir;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  const char* env = std::getenv("PROLIP_OUT_DIR");
  opts.out_dir = env != nullptr ? env : "prolip_out";
  cmd->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", opts.seed, "Seed for all randomness")->capture_default_str();
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
  fs::create_directories(opts.out_dir);
  return (fs::path(opts.out_dir) / name).string();
}

prolip::io::RunManifest make_manifest(const std::vector<std::string>& argv,
                                      const CommonOpts& opts, json config) {
  prolip::io::RunManifest m;
  m.command = argv;
  m.seed = opts.seed;
  m.config_json = config.dump();
  return m;
}

std::string trace_csv(const std::vector<prolip::synth::StepRecord>& trace) {
  std::string out = "step,total,ppcl,inc_vt,inc_mask,vib\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + "," + format_double(r.total) + "," + format_double(r.ppcl) +
           "," + format_double(r.inc_vt) + "," + format_double(r.inc_mask) + "," +
           format_double(r.vib) + "\n";
  }
  return out;
}

std::vector<prolip::GaussianEmbedding> embeddings_only(
    const std::vector<prolip::io::EmbeddingRecord>& records) {
  std::vector<prolip::GaussianEmbedding> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.embedding);
  return out;
}

// --- oracle-check -----------------------------------------------------------

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckRow> run_oracle_checks(std::uint64_t seed) {
  using namespace prolip;
  std::vector<CheckRow> rows;
  CounterRng rng(seed, 42);

  auto random_embedding = [&rng](const std::string& id, std::size_t dim, bool normalize) {
    std::vector<double> mu(dim), lv(dim);
    for (double& x : mu) x = rng.next_normal();
    for (double& v : lv) v = -3.0 + 2.5 * rng.next_unit();
    return normalize ? GaussianEmbedding::normalized(id, mu, lv)
                     : GaussianEmbedding(id, mu, lv);
  };

  {  // csd vs Monte-Carlo, 3 standard errors
    bool pass = true;
    double worst = 0.0;
    for (int p = 0; p < 3; ++p) {
      const auto z1 = random_embedding("a", 4, false);
      const auto z2 = random_embedding("b", 4, false);
      const auto mc = oracles::mc_csd(z1, z2, 200000, seed + static_cast<std::uint64_t>(p));
      const double z = std::abs(mc.estimate - csd(z1, z2)) / mc.std_error;
      worst = std::max(worst, z);
      pass = pass && z < 3.0;
    }
    rows.push_back({"csd vs monte-carlo", pass, "max |z| = " + format_double(worst)});
  }
  {  // similarity identity
    double worst = 0.0;
    for (int p = 0; p < 100; ++p) {
      const auto z1 = random_embedding("a", 8, true);
      const auto z2 = random_embedding("b", 8, true);
      worst = std::max(worst,
                       std::abs(csd_similarity(z1, z2) - (1.0 - 0.5 * csd(z1, z2))));
    }
    rows.push_back({"similarity = 1 - csd/2", worst < 1e-12, "max err = " + format_double(worst)});
  }
  {  // inclusion measure vs quadrature: offset must be parameter-independent
    double lo = 1e300, hi = -1e300;
    for (int p = 0; p < 50; ++p) {
      const double mu1 = -3.0 + 6.0 * rng.next_unit();
      const double mu2 = -3.0 + 6.0 * rng.next_unit();
      const double v1 = 0.05 + 4.95 * rng.next_unit();
      const double v2 = 0.05 + 4.95 * rng.next_unit();
      const GaussianEmbedding z1("a", {mu1}, {std::log(v1)});
      const GaussianEmbedding z2("b", {mu2}, {std::log(v2)});
      const double diff = inc_measure(z1, z2, 1.0) - oracles::quadrature_log_inc(mu1, v1, mu2, v2);
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
    }
    rows.push_back({"inc measure offset spread", hi - lo < 1e-6,
                    "spread = " + format_double(hi - lo)});
  }
  {  // closed form for the standard normal cube
    const double val = std::exp(oracles::quadrature_log_inc(0.0, 1.0, 0.0, 1.0));
    const double expected = 1.0 / (2.0 * std::sqrt(3.0) * 3.14159265358979323846);
    const double rel = std::abs(val - expected) / expected;
    rows.push_back({"quadrature phi^3 closed form", rel < 1e-6, "rel err = " + format_double(rel)});
  }
  {  // vib vs Monte-Carlo KL
    bool pass = true;
    double worst = 0.0;
    for (int p = 0; p < 5; ++p) {
      const auto z = random_embedding("a", 3, false);
      const auto mc = oracles::mc_kl_to_standard_normal(z, 200000,
                                                        seed + 100 + static_cast<std::uint64_t>(p));
      const double zscore = std::abs(mc.estimate - vib_loss(z)) / mc.std_error;
      worst = std::max(worst, zscore);
      pass = pass && zscore < 3.0;
    }
    rows.push_back({"vib vs monte-carlo kl", pass, "max |z| = " + format_double(worst)});
  }
  {  // ppcl d/db against finite differences
    const auto zv = random_embedding("v", 6, true);
    const auto zt = random_embedding("t", 6, true);
    const auto f = [&](const std::vector<double>& x) {
      return ppcl(zv, zt, MatchLabel::positive, 10.0, x[0]);
    };
    const double fd = oracles::finite_diff_grad(f, {0.3}, 1e-5)[0];
    const double analytic =
        sigmoid(-10.0 * csd_similarity(zv, zt) + 0.3);
    const double rel = std::abs(fd - analytic) / std::max(std::abs(fd), 1e-12);
    rows.push_back({"ppcl d/db vs finite diff", rel < 1e-6, "rel err = " + format_double(rel)});
  }
  {  // hypothesis antisymmetry and zero at identity
    double worst = 0.0;
    bool zero_ok = true;
    for (int p = 0; p < 20; ++p) {
      const auto z1 = random_embedding("a", 4, false);
      const auto z2 = random_embedding("b", 4, false);
      worst = std::max(worst, std::abs(inclusion_hypothesis(z1, z2, 1.0) +
                                       inclusion_hypothesis(z2, z1, 1.0)));
      zero_ok = zero_ok && inclusion_hypothesis(z1, z1, 1.0) == 0.0;
    }
    rows.push_back({"hypothesis antisymmetry", worst < 1e-10 && zero_ok,
                    "max |H12+H21| = " + format_double(worst)});
  }
  return rows;
}

int cmd_oracle_check(const std::vector<std::string>& argv, const CommonOpts& opts) {
  const std::vector<CheckRow> rows = run_oracle_checks(opts.seed);
  std::string csv = "check,pass,detail\n";
  bool all_pass = true;
  for (const auto& row : rows) {
    std::cout << (row.pass ? "PASS  " : "FAIL  ") << row.name << "  (" << row.detail << ")\n";
    csv += row.name + "," + (row.pass ? "1" : "0") + "," + row.detail + "\n";
    all_pass = all_pass && row.pass;
  }
  const std::string csv_path = out_path(opts, "oracle_check.csv");
  prolip::io::write_file_locked(csv_path, csv);
  auto manifest = make_manifest(argv, opts, json{{"checks", rows.size()}});
  manifest.add_output(csv_path);
  manifest.write(out_path(opts, "manifest.json"));
  return all_pass ? kExitOk : kExitNumeric;
}

// --- train-synthetic / report -----------------------------------------------

struct TrainFlags {
  int images = 32, texts = 32, attributes = 8;
  prolip::synth::TrainerConfig cfg;
  double eps_log = -10.0;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--images", f.images, "Number of images")->capture_default_str();
  cmd->add_option("--texts", f.texts, "Number of texts")->capture_default_str();
  cmd->add_option("--attributes", f.attributes, "Latent attribute count")->capture_default_str();
  cmd->add_option("--dim", f.cfg.dim, "Embedding dimension")->capture_default_str();
  cmd->add_option("--steps", f.cfg.steps, "Gradient steps")->capture_default_str();
  cmd->add_option("--lr", f.cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--batch", f.cfg.batch_size, "Batch size per modality")->capture_default_str();
  cmd->add_option("--mask-fraction", f.cfg.mask_pair_fraction, "Share of items with masked variants")
      ->capture_default_str();
  cmd->add_option("--mask-ratio", f.cfg.mask_ratio, "Share of attributes masked away")
      ->capture_default_str();
  cmd->add_option("--init-log-var", f.cfg.init_log_var, "Initial log variance")
      ->capture_default_str();
  cmd->add_option("--init-a", f.cfg.init_a, "Initial contrastive scale a")->capture_default_str();
  cmd->add_option("--init-b", f.cfg.init_b, "Initial contrastive bias b")->capture_default_str();
  cmd->add_option("--alpha1", f.cfg.loss.alpha1, "Matched-pair inclusion weight")
      ->capture_default_str();
  cmd->add_option("--alpha2", f.cfg.loss.alpha2, "Masked-pair inclusion weight")
      ->capture_default_str();
  cmd->add_option("--beta", f.cfg.loss.beta, "VIB weight")->capture_default_str();
  cmd->add_option("--c", f.cfg.loss.c, "Inclusion sharpness c")->capture_default_str();
  cmd->add_option("--eps-log", f.eps_log, "log of the inclusion stabilizer eps")
      ->capture_default_str();
}

json train_config_json(const TrainFlags& f, const CommonOpts& opts) {
  return json{{"images", f.images},
              {"texts", f.texts},
              {"attributes", f.attributes},
              {"dim", f.cfg.dim},
              {"steps", f.cfg.steps},
              {"lr", f.cfg.learning_rate},
              {"batch", f.cfg.batch_size},
              {"mask_fraction", f.cfg.mask_pair_fraction},
              {"mask_ratio", f.cfg.mask_ratio},
              {"init_log_var", f.cfg.init_log_var},
              {"init_a", f.cfg.init_a},
              {"init_b", f.cfg.init_b},
              {"alpha1", f.cfg.loss.alpha1},
              {"alpha2", f.cfg.loss.alpha2},
              {"beta", f.cfg.loss.beta},
              {"c", f.cfg.loss.c},
              {"eps_log", f.eps_log},
              {"seed", opts.seed}};
}

int cmd_train_synthetic(const std::vector<std::string>& argv, const CommonOpts& opts,
                        TrainFlags f) {
  f.cfg.seed = opts.seed;
  f.cfg.loss.eps_inc = prolip::LossParams::eps_from_log(f.eps_log);
  prolip::synth::CorpusParams cp;
  cp.mask_pair_fraction = f.cfg.mask_pair_fraction;
  cp.mask_ratio = f.cfg.mask_ratio;
  const auto corpus =
      prolip::synth::generate_corpus(f.images, f.texts, f.attributes, opts.seed, cp);
  const auto result = prolip::synth::train(corpus, f.cfg);

  const std::string corpus_path = out_path(opts, "corpus.jsonl");
  prolip::io::save_corpus(corpus, corpus_path);

  std::vector<prolip::io::EmbeddingRecord> records;
  for (std::size_t i = 0; i < result.table.size(); ++i) {
    records.push_back({result.table.embedding(i), result.table.modalities[i]});
  }
  const std::string emb_path = out_path(opts, "embeddings.jsonl");
  prolip::io::save_embeddings(records, emb_path);

  const std::string scalars_path = out_path(opts, "scalars.json");
  prolip::io::write_file_locked(
      scalars_path, json{{"a", result.table.a}, {"b", result.table.b}}.dump(2) + "\n");

  const std::string trace_path = out_path(opts, "trace.csv");
  prolip::io::write_file_locked(trace_path, trace_csv(result.trace));

  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  auto manifest = make_manifest(argv, opts, train_config_json(f, opts));
  manifest.add_output(corpus_path);
  manifest.add_output(emb_path);
  manifest.add_output(scalars_path);
  manifest.add_output(trace_path);
  manifest.write(out_path(opts, "manifest.json"));
  std::cout << "trained " << result.table.size() << " embeddings over " << f.cfg.steps
            << " steps; final loss "
            << (result.trace.empty() ? 0.0 : result.trace.back().total) << "\n";
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& argv, const CommonOpts& opts, TrainFlags f) {
  f.cfg.seed = opts.seed;
  f.cfg.loss.eps_inc = prolip::LossParams::eps_from_log(f.eps_log);
  prolip::synth::CorpusParams cp;
  cp.mask_pair_fraction = f.cfg.mask_pair_fraction;
  cp.mask_ratio = f.cfg.mask_ratio;
  const auto corpus =
      prolip::synth::generate_corpus(f.images, f.texts, f.attributes, opts.seed, cp);

  // Four rows: baseline, +alpha1, +alpha2, both.
  std::vector<prolip::synth::TrainerConfig> configs;
  for (const bool with_a1 : {false, true}) {
    for (const bool with_a2 : {false, true}) {
      prolip::synth::TrainerConfig cfg = f.cfg;
      cfg.loss.alpha1 = with_a1 ? f.cfg.loss.alpha1 : 0.0;
      cfg.loss.alpha2 = with_a2 ? f.cfg.loss.alpha2 : 0.0;
      configs.push_back(cfg);
    }
  }
  const auto rows = prolip::synth::ablation_report(corpus, configs);

  std::string csv =
      "config,final_loss,mean_sigma_v2,mean_sigma_t2,masked_inclusion_fraction,retrieval_top1\n";
  for (const auto& r : rows) {
    csv += r.label + "," + format_double(r.final_loss) + "," + format_double(r.mean_sigma_v2) +
           "," + format_double(r.mean_sigma_t2) + "," +
           format_double(r.masked_inclusion_fraction) + "," + format_double(r.retrieval_top1) +
           "\n";
    std::cout << r.label << "  loss=" << r.final_loss << "  sv2=" << r.mean_sigma_v2
              << "  st2=" << r.mean_sigma_t2 << "  mask_inc=" << r.masked_inclusion_fraction
              << "  top1=" << r.retrieval_top1 << "\n";
  }
  const std::string csv_path = out_path(opts, "ablation.csv");
  prolip::io::write_file_locked(csv_path, csv);
  auto manifest = make_manifest(argv, opts, train_config_json(f, opts));
  manifest.add_output(csv_path);
  manifest.write(out_path(opts, "manifest.json"));
  return kExitOk;
}

// --- bprw ---------------------------------------------------------------------

int cmd_bprw(const std::vector<std::string>& argv, const CommonOpts& opts,
             const std::string& prompts_path, const std::string& images_path,
             const std::string& class_id, const std::string& few_shot_path,
             prolip::bprw::BprwConfig cfg, bool alpha_set) {
  const auto prompts = embeddings_only(prolip::io::load_embeddings(prompts_path));
  const auto pool_records = prolip::io::load_embeddings(images_path);
  const auto pool = embeddings_only(pool_records);
  if (prompts.empty()) throw prolip::InvalidArgument("bprw: no prompt embeddings in input");
  if (pool.empty()) throw prolip::InvalidArgument("bprw: no image embeddings in input");

  std::optional<std::vector<std::size_t>> members;
  if (!few_shot_path.empty()) {
    members.emplace();
    const std::string content = prolip::io::read_file(few_shot_path);
    std::size_t pos = 0;
    long line_no = 0;
    while (pos < content.size()) {
      auto end = content.find('\n', pos);
      if (end == std::string::npos) end = content.size();
      const std::string line = content.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw prolip::ParseError("expected 'image_id,class_id'", line_no);
      }
      if (line.substr(comma + 1) != class_id) continue;
      const std::string image_id = line.substr(0, comma);
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].id() == image_id) {
          members->push_back(i);
          break;
        }
      }
    }
    if (!alpha_set) cfg.alpha = 2.0;  // few-shot default
  }

  const auto mix = prolip::mix_prompts(prompts, false, class_id);
  const auto obs = prolip::bprw::collect_observations(mix, pool, members, cfg, opts.seed);
  for (const auto& w : obs.warnings) std::cerr << "warning: " << w << "\n";

  auto stamped = prompts;  // run under the requested class id
  auto result = prolip::bprw::run_bprw(stamped, obs, cfg);
  const prolip::PromptWeights out_pi(class_id, result.pi.pi());

  const std::string weights_path = out_path(opts, "weights.jsonl");
  prolip::io::save_weights({out_pi}, weights_path);

  std::string trace = "iteration,log_posterior\n";
  for (std::size_t i = 0; i < result.log_posterior.size(); ++i) {
    trace += std::to_string(i) + "," + format_double(result.log_posterior[i]) + "\n";
  }
  const std::string trace_path = out_path(opts, "bprw_trace.csv");
  prolip::io::write_file_locked(trace_path, trace);

  auto manifest = make_manifest(argv, opts,
                                json{{"alpha", cfg.alpha},
                                     {"eps_cov", cfg.eps_cov},
                                     {"m", cfg.m},
                                     {"k", cfg.k},
                                     {"tol", cfg.tol},
                                     {"max_iters", cfg.max_iters},
                                     {"class_id", class_id},
                                     {"few_shot", !few_shot_path.empty()}});
  manifest.add_input(prompts_path);
  manifest.add_input(images_path);
  if (!few_shot_path.empty()) manifest.add_input(few_shot_path);
  manifest.add_output(weights_path);
  manifest.add_output(trace_path);
  manifest.write(out_path(opts, "manifest.json"));

  std::cout << "bprw " << (result.status == prolip::bprw::BprwStatus::converged
                               ? "converged"
                               : "hit max iterations")
            << " after " << result.iterations << " iterations\n";
  return kExitOk;
}

// --- zsc ------------------------------------------------------------------------

int cmd_zsc(const std::vector<std::string>& argv, const CommonOpts& opts,
            const std::string& input_path, const std::string& prompts_path) {
  const auto images = prolip::io::load_embeddings(input_path);
  const auto prompt_records = prolip::io::load_embeddings(prompts_path);
  if (images.empty()) throw prolip::InvalidArgument("zsc: no image embeddings in --input");
  if (prompt_records.empty()) throw prolip::InvalidArgument("zsc: no prompts in --prompts");

  // Prompt ids follow "<class>::<tag>"; records without "::" form singleton
  // classes. Classes keep first-appearance order.
  std::vector<std::string> class_order;
  std::map<std::string, std::vector<prolip::GaussianEmbedding>> grouped;
  for (const auto& rec : prompt_records) {
    const auto& id = rec.embedding.id();
    const auto sep = id.find("::");
    const std::string cls = sep == std::string::npos ? id : id.substr(0, sep);
    if (!grouped.contains(cls)) class_order.push_back(cls);
    grouped[cls].push_back(rec.embedding);
  }
  std::vector<prolip::inference::ClassPromptSet> classes;
  for (const auto& cls : class_order) {
    classes.push_back(prolip::inference::ClassPromptSet::build(cls, grouped[cls]));
  }

  std::string csv = "image_id,predicted_class";
  for (const auto& cls : class_order) csv += ",score_" + cls;
  csv += "\n";
  for (const auto& rec : images) {
    const auto res = prolip::inference::zsc_classify(rec.embedding, classes);
    csv += rec.embedding.id() + "," + res.class_id;
    for (double s : res.scores) csv += "," + format_double(s);
    csv += "\n";
  }
  const std::string pred_path = out_path(opts, "predictions.csv");
  prolip::io::write_file_locked(pred_path, csv);

  auto manifest = make_manifest(argv, opts, json{{"classes", classes.size()}});
  manifest.add_input(input_path);
  manifest.add_input(prompts_path);
  manifest.add_output(pred_path);
  manifest.write(out_path(opts, "manifest.json"));
  std::cout << "classified " << images.size() << " images into " << classes.size()
            << " classes\n";
  return kExitOk;
}

// --- traverse ---------------------------------------------------------------------

int cmd_traverse(const std::vector<std::string>& argv, const CommonOpts& opts,
                 const std::string& input_path, const std::string& captions_path,
                 const std::string& null_id, const std::string& gt_path, int steps,
                 double eps_log, const std::string& root_mode) {
  const auto images = prolip::io::load_embeddings(input_path);
  const auto caption_records = prolip::io::load_embeddings(captions_path);
  if (images.empty()) throw prolip::InvalidArgument("traverse: no image embeddings");

  std::optional<prolip::GaussianEmbedding> null_text;
  std::vector<prolip::GaussianEmbedding> pool;
  for (const auto& rec : caption_records) {
    if (rec.embedding.id() == null_id) {
      null_text = rec.embedding;
    } else {
      pool.push_back(rec.embedding);
    }
  }
  if (!null_text.has_value()) {
    throw prolip::InvalidArgument("traverse: null caption '" + null_id + "' not found");
  }
  const auto mode = root_mode == "null" ? prolip::inference::RootMode::null_only
                                        : prolip::inference::RootMode::inclusion_blend;
  const double eps_inc = prolip::LossParams::eps_from_log(eps_log);

  std::vector<prolip::inference::TraversalPath> paths;
  std::string steps_csv = "image_id,t,caption_id\n";
  std::string paths_out = R"({"format":"prolip-traversal","version":"1.0"})" "\n";
  for (const auto& rec : images) {
    const auto path =
        prolip::inference::traverse(rec.embedding, pool, *null_text, eps_inc, steps, mode);
    json j;
    j["image_id"] = path.image_id;
    j["target"] = path.target_caption_id;
    if (path.root_caption_id.has_value()) j["root"] = *path.root_caption_id;
    j["unique_captions"] = path.unique_captions;
    paths_out += j.dump() + "\n";
    for (const auto& st : path.steps) {
      steps_csv += path.image_id + "," + format_double(st.t) + "," + st.caption_id + "\n";
    }
    paths.push_back(path);
  }
  const std::string paths_path = out_path(opts, "paths.jsonl");
  prolip::io::write_file_locked(paths_path, paths_out);
  const std::string steps_path = out_path(opts, "steps.csv");
  prolip::io::write_file_locked(steps_path, steps_csv);

  auto manifest = make_manifest(
      argv, opts,
      json{{"steps", steps}, {"eps_log", eps_log}, {"root_mode", root_mode}, {"null_id", null_id}});
  manifest.add_input(input_path);
  manifest.add_input(captions_path);
  manifest.add_output(paths_path);
  manifest.add_output(steps_path);

  if (!gt_path.empty()) {
    prolip::inference::GroundTruth gt;
    const std::string content = prolip::io::read_file(gt_path);
    std::size_t pos = 0;
    long line_no = 0;
    while (pos < content.size()) {
      auto end = content.find('\n', pos);
      if (end == std::string::npos) end = content.size();
      const std::string line = content.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
        gt[j.at("image_id").get<std::string>()] =
            j.at("levels").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw prolip::ParseError(e.what(), line_no);
      }
    }
    const auto metrics = prolip::inference::traversal_metrics(paths, gt);
    const std::string metrics_path = out_path(opts, "metrics.json");
    prolip::io::write_file_locked(metrics_path, json{{"precision", metrics.precision},
                                                     {"recall", metrics.recall},
                                                     {"root_recall", metrics.root_recall}}
                                                    .dump(2) +
                                                "\n");
    manifest.add_input(gt_path);
    manifest.add_output(metrics_path);
    std::cout << "precision " << metrics.precision << ", recall " << metrics.recall
              << ", root recall " << metrics.root_recall << "\n";
  }
  manifest.write(out_path(opts, "manifest.json"));
  return kExitOk;
}

// --- hier-eval ----------------------------------------------------------------------

int cmd_hier_eval(const std::vector<std::string>& argv, const CommonOpts& opts,
                  const std::string& embeddings_path, const std::string& pairs_path,
                  double eps_log, int bins) {
  const auto records = prolip::io::load_embeddings(embeddings_path);
  std::map<std::string, const prolip::GaussianEmbedding*> by_id;
  for (const auto& rec : records) by_id[rec.embedding.id()] = &rec.embedding;

  std::vector<std::pair<prolip::GaussianEmbedding, prolip::GaussianEmbedding>> pairs;
  const std::string content = prolip::io::read_file(pairs_path);
  std::size_t pos = 0;
  long line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    const std::string line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw prolip::ParseError("expected 'specific_id,general_id'", line_no);
    }
    const std::string specific = line.substr(0, comma);
    const std::string general = line.substr(comma + 1);
    if (!by_id.contains(specific) || !by_id.contains(general)) {
      throw prolip::ParseError("unknown embedding id in pair", line_no);
    }
    pairs.emplace_back(*by_id.at(specific), *by_id.at(general));
  }

  const double eps_inc = prolip::LossParams::eps_from_log(eps_log);
  const auto eval = prolip::inference::eval_hierarchy_inclusion(pairs, eps_inc);

  std::string values_csv = "h\n";
  for (double h : eval.h_values) values_csv += format_double(h) + "\n";
  const std::string values_path = out_path(opts, "h_values.csv");
  prolip::io::write_file_locked(values_path, values_csv);

  // Fixed-width histogram over the observed range.
  double lo = eval.h_values.front(), hi = eval.h_values.front();
  for (double h : eval.h_values) {
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  const double width = (hi > lo ? hi - lo : 1.0) / bins;
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double h : eval.h_values) {
    auto bin = static_cast<std::size_t>((h - lo) / width);
    if (bin >= counts.size()) bin = counts.size() - 1;
    counts[bin]++;
  }
  json hist;
  hist["fraction_included"] = eval.fraction;
  hist["bin_lo"] = lo;
  hist["bin_width"] = width;
  hist["counts"] = counts;
  const std::string eval_path = out_path(opts, "hier_eval.json");
  prolip::io::write_file_locked(eval_path, hist.dump(2) + "\n");

  auto manifest =
      make_manifest(argv, opts, json{{"eps_log", eps_log}, {"bins", bins}});
  manifest.add_input(embeddings_path);
  manifest.add_input(pairs_path);
  manifest.add_output(values_path);
  manifest.add_output(eval_path);
  manifest.write(out_path(opts, "manifest.json"));
  std::cout << "inclusion fraction " << eval.fraction << " over " << pairs.size() << " pairs\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic embedding toolkit: losses, EM re-weighting, traversal"};
  app.require_subcommand(1);

  const std::vector<std::string> raw_args(argv, argv + argc);

  CommonOpts oracle_opts;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the oracle-vs-analytic suite");
  add_common(oracle_cmd, oracle_opts);

  CommonOpts train_opts;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train-synthetic", "Train embeddings on a synthetic corpus");
  add_common(train_cmd, train_opts);
  add_train_flags(train_cmd, train_flags);

  CommonOpts report_opts;
  TrainFlags report_flags;
  report_flags.cfg.loss.alpha1 = 0.05;  // ablation runs toggle these
  report_flags.cfg.loss.alpha2 = 0.05;
  auto* report_cmd = app.add_subcommand("report", "Loss-flag ablation table on a synthetic corpus");
  add_common(report_cmd, report_opts);
  add_train_flags(report_cmd, report_flags);

  CommonOpts bprw_opts;
  std::string bprw_prompts, bprw_images, bprw_class = "default", bprw_few_shot;
  prolip::bprw::BprwConfig bprw_cfg;
  auto* bprw_cmd = app.add_subcommand("bprw", "Bayesian prompt re-weighting via MAP EM");
  add_common(bprw_cmd, bprw_opts);
  bprw_cmd->add_option("--prompts", bprw_prompts, "Prompt embedding file")->required();
  bprw_cmd->add_option("--images", bprw_images, "Image embedding pool file")->required();
  bprw_cmd->add_option("--class-id", bprw_class, "Class id for the weight table")
      ->capture_default_str();
  auto* alpha_opt =
      bprw_cmd->add_option("--alpha", bprw_cfg.alpha, "Dirichlet concentration")
          ->capture_default_str();
  bprw_cmd->add_option("--eps-cov", bprw_cfg.eps_cov, "Covariance stabilizer")
      ->capture_default_str();
  bprw_cmd->add_option("--m", bprw_cfg.m, "Images per class (zero-shot KNN)")
      ->capture_default_str();
  bprw_cmd->add_option("--k", bprw_cfg.k, "Samples per selected image")->capture_default_str();
  bprw_cmd->add_option("--few-shot-labels", bprw_few_shot,
                       "CSV of image_id,class_id ground-truth labels");
  bprw_cmd->add_option("--tol", bprw_cfg.tol, "Convergence threshold on max |delta pi|")
      ->capture_default_str();
  bprw_cmd->add_option("--max-iters", bprw_cfg.max_iters, "Iteration cap")->capture_default_str();

  CommonOpts zsc_opts;
  std::string zsc_input, zsc_prompts;
  auto* zsc_cmd = app.add_subcommand("zsc", "Prompt-ensemble zero-shot classification");
  add_common(zsc_cmd, zsc_opts);
  zsc_cmd->add_option("--input", zsc_input, "Image embedding file")->required();
  zsc_cmd->add_option("--prompts", zsc_prompts, "Prompt embedding file (ids '<class>::<tag>')")
      ->required();

  CommonOpts trav_opts;
  std::string trav_input, trav_captions, trav_null, trav_gt, trav_mode = "inclusion";
  int trav_steps = 50;
  double trav_eps_log = -10.0;
  auto* trav_cmd = app.add_subcommand("traverse", "Root-to-caption interpolation traversal");
  add_common(trav_cmd, trav_opts);
  trav_cmd->add_option("--input", trav_input, "Image embedding file")->required();
  trav_cmd->add_option("--captions", trav_captions, "Caption embedding pool file")->required();
  trav_cmd->add_option("--null-id", trav_null, "Id of the null caption inside --captions")
      ->required();
  trav_cmd->add_option("--ground-truth", trav_gt,
                       "JSONL of {image_id, levels:[most general...]} for metrics");
  trav_cmd->add_option("--steps", trav_steps, "Interpolation steps")->capture_default_str();
  trav_cmd->add_option("--eps-log", trav_eps_log, "log of the inclusion stabilizer")
      ->capture_default_str();
  trav_cmd->add_option("--root-mode", trav_mode, "inclusion | null")
      ->check(CLI::IsMember({"inclusion", "null"}))
      ->capture_default_str();

  CommonOpts hier_opts;
  std::string hier_embeddings, hier_pairs;
  double hier_eps_log = -10.0;
  int hier_bins = 20;
  auto* hier_cmd = app.add_subcommand("hier-eval", "Hierarchy inclusion-fraction evaluation");
  add_common(hier_cmd, hier_opts);
  hier_cmd->add_option("--embeddings", hier_embeddings, "Embedding file")->required();
  hier_cmd->add_option("--pairs", hier_pairs, "CSV of specific_id,general_id")->required();
  hier_cmd->add_option("--eps-log", hier_eps_log, "log of the inclusion stabilizer")
      ->capture_default_str();
  hier_cmd->add_option("--bins", hier_bins, "Histogram bins")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (oracle_cmd->parsed()) return cmd_oracle_check(raw_args, oracle_opts);
    if (train_cmd->parsed()) return cmd_train_synthetic(raw_args, train_opts, train_flags);
    if (report_cmd->parsed()) return cmd_report(raw_args, report_opts, report_flags);
    if (bprw_cmd->parsed()) {
      return cmd_bprw(raw_args, bprw_opts, bprw_prompts, bprw_images, bprw_class, bprw_few_shot,
                      bprw_cfg, alpha_opt->count() > 0);
    }
    if (zsc_cmd->parsed()) return cmd_zsc(raw_args, zsc_opts, zsc_input, zsc_prompts);
    if (trav_cmd->parsed()) {
      return cmd_traverse(raw_args, trav_opts, trav_input, trav_captions, trav_null, trav_gt,
                          trav_steps, trav_eps_log, trav_mode);
    }
    if (hier_cmd->parsed()) {
      return cmd_hier_eval(raw_args, hier_opts, hier_embeddings, hier_pairs, hier_eps_log,
                           hier_bins);
    }
  } catch (const prolip::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const prolip::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const prolip::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const prolip::GenerationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitValidation;
}
