// SPDX-License-Identifier: Apache-2.0

#include "avdet/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avdet/checkpoint.hpp"
#include "avdet/config.hpp"
#include "avdet/gradcheck.hpp"
#include "avdet/manifest.hpp"

namespace avdet {

namespace fs = std::filesystem;

namespace {

/// Flags shared by every subcommand: preset base, config overlay, seed
/// override. --seed rules every seed the run uses.
struct CommonOpts {
  std::string preset = "desk";
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* sub) {
    sub->add_option("--preset", preset, "configuration preset")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--config", config_path, "JSON config overlaying the preset");
    seed_opt = sub->add_option("--seed", seed, "override every seed in the config");
  }

  RunConfig resolve() const {
    RunConfig cfg = preset_from(preset);
    if (!config_path.empty()) cfg = read_run_config(config_path, std::move(cfg));
    if (seed_opt != nullptr && seed_opt->count() > 0) {
      cfg.seed = seed;
      cfg.train.seed = seed;
    }
    cfg.validate();
    return cfg;
  }
};

std::pair<Real, Real> parse_ratio(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("ratio must look like A:B, got '" + text + "'");
  }
  try {
    size_t used = 0;
    const Real a = std::stod(text.substr(0, colon), &used);
    if (used != colon) throw ConfigError("ratio must look like A:B, got '" + text + "'");
    const std::string rest = text.substr(colon + 1);
    const Real b = std::stod(rest, &used);
    if (used != rest.size()) throw ConfigError("ratio must look like A:B, got '" + text + "'");
    return {a, b};
  } catch (const std::invalid_argument&) {
    throw ConfigError("ratio must look like A:B, got '" + text + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("ratio out of range: '" + text + "'");
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      size_t used = 0;
      seeds.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("bad seed list '" + text + "' (expected e.g. 1,2,3)");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::string sample_dir_name(Index i, Index n) {
  const size_t width = std::max<size_t>(4, std::to_string(n - 1).size());
  std::ostringstream os;
  os << "s" << std::setw(static_cast<int>(width)) << std::setfill('0') << i;
  return os.str();
}

/// Reads manifest.jsonl under dir and loads every referenced sample into the
/// split it is assigned to.
DataSplits load_manifest_splits(const fs::path& dir) {
  const SampleManifest manifest = read_manifest_jsonl(dir / "manifest.jsonl");
  DataSplits splits;
  for (const ManifestEntry& e : manifest.entries) {
    LoadedSample loaded = load_sample(e, dir);
    SyntheticSample sample{std::move(loaded.face), std::move(loaded.audio), loaded.label,
                           loaded.forgery};
    switch (e.split) {
      case Split::train: splits.train.push_back(std::move(sample)); break;
      case Split::val: splits.val.push_back(std::move(sample)); break;
      case Split::test: splits.test.push_back(std::move(sample)); break;
    }
  }
  return splits;
}

DataSplits make_splits(const RunConfig& cfg, const std::string& data_dir) {
  if (!data_dir.empty()) return load_manifest_splits(data_dir);
  std::vector<SyntheticSample> samples =
      generate_dataset(cfg.n_samples, cfg.seed, cfg.mix, cfg.synth);
  return split_dataset(std::move(samples), cfg.seed, cfg.train_frac, cfg.val_frac, cfg.test_frac);
}

int do_gen(const CommonOpts& opts, const std::string& out_dir, const std::string& format_name,
           const std::string& balance_ratio, const std::string& strategy_name, std::ostream& out) {
  const RunConfig cfg = opts.resolve();
  const MediaFormat format = media_format_from(format_name);

  const std::vector<SyntheticSample> samples =
      generate_dataset(cfg.n_samples, cfg.seed, cfg.mix, cfg.synth);
  fs::create_directories(out_dir);
  for (Index i = 0; i < static_cast<Index>(samples.size()); ++i) {
    write_sample_dir(fs::path(out_dir) / sample_dir_name(i, cfg.n_samples),
                     samples[static_cast<size_t>(i)], format);
  }

  ManifestBuildReport report = build_manifest(
      out_dir, SplitRatio{cfg.train_frac, cfg.val_frac, cfg.test_frac}, cfg.seed);
  if (!report.rejects.empty()) {
    std::ofstream rej(fs::path(out_dir) / "rejects.txt");
    for (const std::string& r : report.rejects) rej << r << "\n";
    out << report.rejects.size() << " rejected sample(s), see rejects.txt\n";
  }

  if (!balance_ratio.empty()) {
    const auto [t_real, t_fake] = parse_ratio(balance_ratio);
    const BalanceReport b = balance(report.manifest, t_real, t_fake,
                                    balance_strategy_from(strategy_name), cfg.seed);
    report.manifest = b.manifest;
    out << format_balance_table(b);
  }

  write_manifest_jsonl(fs::path(out_dir) / "manifest.jsonl", report.manifest);
  write_run_config(fs::path(out_dir) / "config.json", cfg);

  const SplitCounts all = report.manifest.counts();
  out << "wrote " << all.total() << " samples (" << all.real << " real, " << all.fake
      << " fake) to " << out_dir << "\n"
      << "splits: train " << report.manifest.counts(Split::train).total() << ", val "
      << report.manifest.counts(Split::val).total() << ", test "
      << report.manifest.counts(Split::test).total() << "\n";
  return 0;
}

int do_train(const CommonOpts& opts, const std::string& out_dir, const std::string& data_dir,
             std::ostream& out) {
  const RunConfig cfg = opts.resolve();
  const DataSplits splits = make_splits(cfg, data_dir);

  Rng init_rng(cfg.seed);
  Detector model = Detector::init(cfg.model, init_rng);
  const PreparedDataset train_set = prepare_dataset(model, splits.train);
  const PreparedDataset val_set = prepare_dataset(model, splits.val);
  const PreparedDataset test_set = prepare_dataset(model, splits.test);

  const TrainOutcome outcome = train(model, train_set, val_set, cfg.train);
  if (test_set.size() == 0) throw EmptyInputError("train: empty test split");
  const EvalResult result = evaluate(model, test_set, cfg.seed);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_history_csv((dir / "history.csv").string(), outcome.history);
  if (!outcome.fusion_log.empty()) {
    write_fusion_log_csv((dir / "fusion_log.csv").string(), outcome.fusion_log);
  }
  write_metrics_json((dir / "metrics.json").string(), result.metrics,
                     {{"mean_loss", result.mean_loss},
                      {"n_test", static_cast<Real>(test_set.size())}});
  save_checkpoint(dir / "checkpoint.bin", model.parameters());
  write_run_config(dir / "config.json", cfg);

  out << std::fixed << std::setprecision(4) << "test: acc " << result.metrics.acc;
  if (result.metrics.auc) out << ", auc " << *result.metrics.auc;
  out << " over " << test_set.size() << " samples; artifacts in " << out_dir << "\n";
  return 0;
}

int do_eval(const CommonOpts& opts, const std::string& checkpoint, const std::string& data_dir,
            const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = opts.resolve();
  Rng init_rng(cfg.seed);
  Detector model = Detector::init(cfg.model, init_rng);
  ParamList params = model.parameters();
  load_checkpoint_into(checkpoint, params);

  const DataSplits splits = make_splits(cfg, data_dir);
  const PreparedDataset test_set = prepare_dataset(model, splits.test);
  if (test_set.size() == 0) throw EmptyInputError("eval: empty test split");
  const EvalResult result = evaluate(model, test_set, cfg.seed);

  std::ostringstream line;
  line << std::fixed << std::setprecision(4) << "test: acc " << result.metrics.acc;
  if (result.metrics.auc) line << ", auc " << *result.metrics.auc;
  line << " over " << test_set.size() << " samples\n";
  out << line.str();
  if (!out_path.empty()) {
    write_metrics_json(out_path, result.metrics,
                       {{"mean_loss", result.mean_loss},
                        {"n_test", static_cast<Real>(test_set.size())}});
    out << "metrics written to " << out_path << "\n";
  }
  return 0;
}

int do_infer(const CommonOpts& opts, const std::string& sample_dir, const std::string& checkpoint,
             std::ostream& out) {
  const RunConfig cfg = opts.resolve();
  Rng init_rng(cfg.seed);
  Detector model = Detector::init(cfg.model, init_rng);
  ParamList params = model.parameters();
  load_checkpoint_into(checkpoint, params);

  const fs::path dir = fs::path(sample_dir);
  const ManifestEntry entry = index_sample_dir(dir);
  const LoadedSample sample = load_sample(entry, dir.parent_path());

  Rng patch_rng(cfg.seed);
  const DetectorOutput output = model.forward_raw(sample.face, sample.audio, patch_rng);

  out << std::fixed << std::setprecision(6) << "P(fake) = " << output.prob.item() << "\n";
  out << "label: " << (sample.label ? "fake" : "real");
  if (sample.forgery != ForgeryType::none) out << " (" << to_string(sample.forgery) << ")";
  out << "\n";
  if (output.fusion_log) {
    out << "fusion weights (" << to_string(cfg.model.weight_mode) << " mode):\n";
    for (size_t l = 0; l < output.fusion_log->layers.size(); ++l) {
      const LayerWeights& layer = output.fusion_log->layers[l];
      out << "  layer " << (l + 1) << ": W_F " << std::setprecision(4) << layer.w_f << ", W_A "
          << layer.w_a << "\n";
      for (size_t h = 0; h < layer.heads.size(); ++h) {
        out << "    head " << (h + 1) << ": W_F " << layer.heads[h].w_f << ", W_A "
            << layer.heads[h].w_a << "\n";
      }
    }
  } else {
    out << "fusion weights: none (" << to_string(cfg.model.fusion) << " mode)\n";
  }
  return 0;
}

int do_gradcheck(std::uint64_t seed, std::ostream& out) {
  constexpr Real kTol = 1e-5;
  const auto start = std::chrono::steady_clock::now();

  out << "per-op finite-difference checks (seed " << seed << "):\n";
  const Real worst_ops = run_op_gradient_checks(out, seed, 10);

  // Whole model: pixels and waveform in, fake-probability logit out.
  const ModelConfig mc = ModelConfig::desk();
  const SynthConfig sc = SynthConfig::for_model(mc);
  const std::vector<SyntheticSample> samples = generate_dataset(2, seed, ForgeryMix{}, sc);
  Rng init_rng(seed);
  Detector model = Detector::init(mc, init_rng);

  std::vector<Tensor> leaves;
  leaves.push_back(face_rows(samples[0].face, /*requires_grad=*/true));
  leaves.push_back(Tensor::from_vector(samples[0].audio.samples, /*requires_grad=*/true));
  for (const NamedParam& p : model.parameters()) leaves.push_back(p.tensor);

  Rng point_rng(seed + 17);
  const Real worst_model = fd_sampled_max_rel_err(
      [&] {
        Rng patch_rng(seed);
        return model.forward_graph(leaves[0], leaves[1], patch_rng).logit;
      },
      leaves, 10, point_rng);
  out << "  grad " << std::left << std::setw(24) << "end_to_end_model"
      << " max rel err " << std::scientific << std::setprecision(3) << worst_model << "\n";

  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                            start);
  const bool pass = worst_ops < kTol && worst_model < kTol;
  out << "gradcheck " << (pass ? "PASS" : "FAIL") << " (tolerance " << std::scientific
      << std::setprecision(0) << kTol << ", " << std::fixed << std::setprecision(1)
      << static_cast<double>(elapsed.count()) / 1000.0 << " s)\n";
  return pass ? 0 : 1;
}

int do_ablate(const CommonOpts& opts, const std::string& out_dir, const std::string& seeds_text,
              Index n_override, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = opts.resolve();
  AblationSpec spec;
  spec.model = cfg.model;
  spec.train = cfg.train;
  spec.mix = cfg.mix;
  spec.n_samples = n_override > 0 ? n_override : cfg.n_samples;
  spec.seeds = parse_seeds(seeds_text);
  spec.grid = {
      {FusionMode::visual_only, TokenizerMode::frame},
      {FusionMode::av_concat, TokenizerMode::frame},
      {FusionMode::av_dwf, TokenizerMode::frame},
      {FusionMode::visual_only, TokenizerMode::patch},
      {FusionMode::av_concat, TokenizerMode::patch},
      {FusionMode::av_dwf, TokenizerMode::patch},
  };

  const std::vector<AblationCell> cells = run_ablation(spec, &err);
  fs::create_directories(out_dir);
  const fs::path csv = fs::path(out_dir) / "ablation.csv";
  write_ablation_csv(csv.string(), cells);

  out << "medians over seeds {";
  for (size_t i = 0; i < spec.seeds.size(); ++i) out << (i ? "," : "") << spec.seeds[i];
  out << "}:\n";
  out << std::left << std::setw(13) << "fusion" << std::setw(11) << "tokenizer" << std::right
      << std::setw(8) << "acc" << std::setw(8) << "auc" << std::setw(11) << "audio_auc" << "\n";
  for (const auto& [fusion, tokenizer] : spec.grid) {
    out << std::left << std::setw(13) << to_string(fusion) << std::setw(11)
        << to_string(tokenizer) << std::right << std::fixed << std::setprecision(3)
        << std::setw(8) << median_metric(cells, fusion, tokenizer, &AblationCell::test_acc)
        << std::setw(8) << median_metric(cells, fusion, tokenizer, &AblationCell::test_auc)
        << std::setw(11)
        << median_metric(cells, fusion, tokenizer, &AblationCell::audio_subset_auc) << "\n";
  }
  out << "table written to " << csv.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"audio-visual deepfake detector"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen", "render a synthetic dataset to disk");
  CommonOpts gen_opts;
  gen_opts.attach(gen);
  std::string gen_out;
  std::string gen_format = "media";
  std::string gen_balance;
  std::string gen_strategy = "subsample";
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--format", gen_format, "sample file format")
      ->check(CLI::IsMember({"media", "packed"}));
  gen->add_option("--balance", gen_balance, "rebalance classes to this real:fake ratio");
  gen->add_option("--strategy", gen_strategy, "how to move class counts")
      ->check(CLI::IsMember({"subsample", "oversample"}));

  CLI::App* train_cmd = app.add_subcommand("train", "train a detector and evaluate it");
  CommonOpts train_opts;
  train_opts.attach(train_cmd);
  std::string train_out;
  std::string train_data;
  train_cmd->add_option("--out", train_out, "artifact directory")->required();
  train_cmd->add_option("--data", train_data, "dataset directory with manifest.jsonl "
                                              "(default: generate in memory)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CommonOpts eval_opts;
  eval_opts.attach(eval_cmd);
  std::string eval_checkpoint;
  std::string eval_data;
  std::string eval_out;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "trained parameters")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory with manifest.jsonl");
  eval_cmd->add_option("--out", eval_out, "write metrics JSON here");

  CLI::App* infer_cmd = app.add_subcommand("infer", "score one sample directory");
  CommonOpts infer_opts;
  infer_opts.attach(infer_cmd);
  std::string infer_sample;
  std::string infer_checkpoint;
  infer_cmd->add_option("sample", infer_sample, "sample directory")->required();
  infer_cmd->add_option("--checkpoint", infer_checkpoint, "trained parameters")->required();

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference checks for every op and the full model");
  std::uint64_t gradcheck_seed = 1;
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "random point seed");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "fusion x tokenizer grid, medians over seeds");
  CommonOpts ablate_opts;
  ablate_opts.attach(ablate_cmd);
  std::string ablate_out = ".";
  std::string ablate_seeds = "1,2,3";
  Index ablate_n = 0;
  ablate_cmd->add_option("--out", ablate_out, "directory for ablation.csv");
  ablate_cmd->add_option("--seeds", ablate_seeds, "comma-separated training seeds");
  ablate_cmd->add_option("--n", ablate_n, "dataset size override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code;
  }

  try {
    if (*gen) return do_gen(gen_opts, gen_out, gen_format, gen_balance, gen_strategy, out);
    if (*train_cmd) return do_train(train_opts, train_out, train_data, out);
    if (*eval_cmd) return do_eval(eval_opts, eval_checkpoint, eval_data, eval_out, out);
    if (*infer_cmd) return do_infer(infer_opts, infer_sample, infer_checkpoint, out);
    if (*gradcheck_cmd) return do_gradcheck(gradcheck_seed, out);
    if (*ablate_cmd) return do_ablate(ablate_opts, ablate_out, ablate_seeds, ablate_n, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace avdet
