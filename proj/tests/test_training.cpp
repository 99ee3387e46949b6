// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avdet/metrics.hpp"
#include "avdet/ops.hpp"
#include "avdet/train.hpp"

using namespace avdet;

namespace {

// All-pairs reference: a fake scored above a real wins 1, a tie wins 1/2.
Real auc_pairs(const std::vector<Real>& scores, const std::vector<int>& labels) {
  Real wins = 0;
  Index n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    ++n_pos;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  for (int l : labels) n_neg += l == 0;
  return wins / (static_cast<Real>(n_pos) * static_cast<Real>(n_neg));
}

ModelConfig tiny_config(FusionMode fusion) {
  ModelConfig mc = ModelConfig::desk();
  mc.fusion = fusion;
  return mc;
}

std::vector<SyntheticSample> tiny_dataset(Index n, std::uint64_t seed) {
  ModelConfig mc = ModelConfig::desk();
  return generate_dataset(n, seed, ForgeryMix{}, SynthConfig::for_model(mc));
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("rank AUC equals all-pairs counting, ties included") {
  Rng rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(40));
    std::vector<Real> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (Index i = 0; i < n; ++i) {
      // A coarse grid forces plenty of exact ties.
      scores[i] = trial % 2 == 0 ? static_cast<Real>(rng.below(5)) / 4.0 : rng.uniform01();
      labels[i] = rng.uniform01() < 0.5 ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) {
      labels[0] = 0;
      labels[n - 1] = 1;
    }
    CHECK(auc_score(scores, labels) == auc_pairs(scores, labels));
  }
}

TEST_CASE("AUC hand-checked values") {
  CHECK(auc_score({0.3, 0.5, 0.5, 0.7}, {0, 0, 1, 1}) == 0.875);
  CHECK(auc_score({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc_score({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auc_score({0.4, 0.4, 0.4, 0.4}, {0, 1, 0, 1}) == 0.5);
}

TEST_CASE("AUC is invariant under monotone transforms and flips under label swap") {
  Rng rng(77);
  std::vector<Real> scores(31);
  std::vector<int> labels(31);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = static_cast<Real>(rng.below(7)) / 6.0;
    labels[i] = rng.uniform01() < 0.4 ? 1 : 0;
  }
  labels[0] = 0;
  labels[1] = 1;
  const Real base = auc_score(scores, labels);

  std::vector<Real> warped(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) warped[i] = std::atan(3.0 * scores[i] - 1.0);
  CHECK(auc_score(warped, labels) == base);

  std::vector<int> flipped(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) flipped[i] = 1 - labels[i];
  // The two divisions round independently, so the identity is exact only in
  // real arithmetic.
  CHECK(auc_score(scores, flipped) == doctest::Approx(1.0 - base).epsilon(1e-15));
}

TEST_CASE("metrics edge cases") {
  CHECK_THROWS_AS(auc_score({0.1, 0.9}, {1, 1}), EmptyInputError);
  CHECK_THROWS_AS(auc_score({}, {}), EmptyInputError);
  CHECK_THROWS_AS(auc_score({0.1}, {0, 1}), ShapeError);

  const Metrics single = compute_metrics({0.2, 0.8}, {0, 0});
  CHECK(single.acc == 0.5);  // 0.8 crosses the fake threshold
  CHECK(!single.auc.has_value());

  const Metrics both = compute_metrics({0.5, 0.4}, {1, 0});
  CHECK(both.auc.has_value());
  CHECK(both.acc == 1.0);  // exactly 0.5 counts as fake
  CHECK(both.confusion.tp == 1);
  CHECK(both.confusion.tn == 1);
  CHECK(both.confusion.fp == 0);
  CHECK(both.confusion.fn == 0);
}

TEST_CASE("Adam follows the scalar reference formula") {
  Tensor p = Tensor::from_flat({1}, Vec::Constant(1, 0.7), true);
  Adam opt({{"p", p}}, AdamConfig{});
  const AdamConfig cfg;

  double ref = 0.7, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    Tensor loss = mul(p, p);
    backward(loss);
    opt.step();

    const double g = 2.0 * ref;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, t));
    const double vhat = v / (1 - std::pow(cfg.beta2, t));
    ref -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    CHECK(p.flat()[0] == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("Adam with lr zero and with missing gradients leaves parameters alone") {
  Tensor p = Tensor::from_flat({1}, Vec::Constant(1, 0.3), true);
  AdamConfig cfg;
  cfg.lr = 0;
  Adam opt({{"p", p}}, cfg);
  Tensor loss = mul(p, p);
  backward(loss);
  opt.step();
  CHECK(p.flat()[0] == 0.3);

  Tensor q = Tensor::from_flat({1}, Vec::Constant(1, 0.4), true);
  Adam opt2({{"q", q}}, AdamConfig{});
  opt2.step();  // no backward ran, so the gradient is missing
  CHECK(q.flat()[0] == 0.4);

  TrainConfig ok;
  ok.lr = 0;
  CHECK_NOTHROW(ok.validate());
  TrainConfig bad;
  bad.lr = -1e-3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("one training step lowers the loss on a small set") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  Rng mrng(9);
  Detector model = Detector::init(mc, mrng);
  const auto data = tiny_dataset(8, 5);
  const PreparedDataset prep = prepare_dataset(model, data);

  TrainConfig tc;
  tc.epochs = 2;
  const TrainOutcome out = train(model, prep, prep, tc);
  REQUIRE(out.history.size() == 2);
  CHECK(out.history[1].train_loss < out.history[0].train_loss);
  CHECK(!out.fusion_log.empty());
}

TEST_CASE("identical seeds give bit-identical training runs") {
  const auto data = tiny_dataset(16, 6);
  auto run = [&](std::uint64_t model_seed) {
    ModelConfig mc = tiny_config(FusionMode::av_dwf);
    Rng mrng(model_seed);
    Detector model = Detector::init(mc, mrng);
    auto prep = prepare_dataset(model, data);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 3;
    const TrainOutcome out = train(model, prep, prep, tc);
    std::vector<Real> flat;
    for (const auto& p : model.parameters()) {
      for (Index i = 0; i < p.tensor.numel(); ++i) flat.push_back(p.tensor.flat()[i]);
    }
    const EvalResult ev = evaluate(model, prep, 42);
    return std::tuple{flat, out.history, ev.scores};
  };

  const auto [pa, ha, sa] = run(9);
  const auto [pb, hb, sb] = run(9);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].train_loss == hb[i].train_loss);
    CHECK(ha[i].val_loss == hb[i].val_loss);
  }
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i] == sb[i]);

  const auto [pc, hc, sc] = run(10);
  bool any_different = false;
  for (std::size_t i = 0; i < pa.size(); ++i) any_different |= pa[i] != pc[i];
  CHECK(any_different);
}

TEST_CASE("split proportions use largest remainder and lose nothing") {
  const auto data = tiny_dataset(10, 7);
  const DataSplits s = split_dataset(data, 1);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);

  // Same seed, same split; the pieces are a permutation of the input.
  const DataSplits again = split_dataset(data, 1);
  CHECK(again.train[0].face.pixels == s.train[0].face.pixels);

  auto key = [](const SyntheticSample& smp) {
    return std::pair{smp.face.pixels[0], smp.audio.samples[0]};
  };
  std::multiset<std::pair<Real, Real>> input_keys, output_keys;
  for (const auto& smp : data) input_keys.insert(key(smp));
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& smp : *part) output_keys.insert(key(smp));
  }
  CHECK(input_keys == output_keys);

  CHECK_THROWS_AS(split_dataset(data, 1, 0.5, 0.2, 0.2), ConfigError);
  CHECK_THROWS_AS(split_dataset({}, 1), EmptyInputError);
}

TEST_CASE("dataset generation honors counts, mix, and seeds") {
  ModelConfig mc = ModelConfig::desk();
  const SynthConfig sc = SynthConfig::for_model(mc);

  ForgeryMix only_video{1.0, 0.0, 0.0};
  auto data = generate_dataset(100, 2, only_video, sc);
  std::map<ForgeryType, int> counts;
  for (const auto& smp : data) {
    ++counts[smp.forgery];
    CHECK(smp.label == (smp.forgery == ForgeryType::none ? 0 : 1));
  }
  CHECK(counts[ForgeryType::none] == 50);
  CHECK(counts[ForgeryType::video_only] == 50);

  counts.clear();
  for (const auto& smp : generate_dataset(99, 2, ForgeryMix{}, sc)) ++counts[smp.forgery];
  CHECK(counts[ForgeryType::none] == 50);
  CHECK(counts[ForgeryType::video_only] == 17);  // largest remainder takes the first slot
  CHECK(counts[ForgeryType::audio_only] == 16);
  CHECK(counts[ForgeryType::desync] == 16);

  const auto a = generate_dataset(6, 3, ForgeryMix{}, sc);
  const auto b = generate_dataset(6, 3, ForgeryMix{}, sc);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].forgery == b[i].forgery);
    CHECK(a[i].face.pixels == b[i].face.pixels);
    CHECK(a[i].audio.samples == b[i].audio.samples);
  }
  const auto c = generate_dataset(6, 4, ForgeryMix{}, sc);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].face.pixels != c[i].face.pixels;
  CHECK(differs);

  CHECK_THROWS_AS(generate_dataset(1, 1, ForgeryMix{}, sc), ConfigError);
  CHECK_THROWS_AS(generate_dataset(10, 1, ForgeryMix{0.5, 0.0, 0.0}, sc), ConfigError);
}

TEST_CASE("coupling statistic separates real from every forgery") {
  ModelConfig mc = ModelConfig::desk();
  const SynthConfig sc = SynthConfig::for_model(mc);
  for (const auto& smp : generate_dataset(80, 11, ForgeryMix{}, sc)) {
    const Real stat = coupling_statistic(smp, sc);
    switch (smp.forgery) {
      case ForgeryType::none: CHECK(stat > 0.9); break;
      case ForgeryType::video_only: CHECK(stat == 0.0); break;
      default: CHECK(stat < -0.8); break;  // antiphase defaults
    }
  }
}

TEST_CASE("training reports non-finite losses with context") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  Rng mrng(4);
  Detector model = Detector::init(mc, mrng);
  const PreparedDataset prep = prepare_dataset(model, tiny_dataset(4, 8));
  model.head.lin.weight.leaf_values()[0] = std::numeric_limits<Real>::quiet_NaN();

  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(model, prep, prep, tc);
    FAIL("expected TrainingError");
  } catch (const TrainingError& err) {
    CHECK(std::string(err.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("training requires a non-empty train split") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  Rng mrng(4);
  Detector model = Detector::init(mc, mrng);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train(model, PreparedDataset{}, PreparedDataset{}, tc), TrainingError);
}

TEST_CASE("literal fusion weights reproduce plain concatenation in the full model") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  mc.weight_mode = WeightMode::literal;
  Rng mrng(12);
  Detector model = Detector::init(mc, mrng);
  const auto data = tiny_dataset(2, 13);
  const ModelInput input = model.prepare(data[0].face, data[0].audio);

  Rng patch_rng(1);
  const DetectorOutput out = model.forward(input, patch_rng);

  const Tensor f = class_token(encode(tokenize_rows(input.face_rows, model.face), model.face));
  const Tensor a =
      class_token(encode(tokenize_rows(input.audio_rows, *model.audio), *model.audio));
  const Tensor parts[] = {reshape(f, {1, mc.dim}), reshape(a, {1, mc.dim})};
  const Tensor concat = reshape(concat_cols(parts), {2 * mc.dim});
  const Tensor logit = classify_logit(concat, model.head);

  CHECK(out.logit.flat()[0] == logit.flat()[0]);
  REQUIRE(out.fusion_log.has_value());
  for (const auto& layer : out.fusion_log->layers) {
    CHECK(layer.w_f == 1.0);
    CHECK(layer.w_a == 1.0);
  }
}

TEST_CASE("forward variants cover every mode and validate inputs") {
  const auto data = tiny_dataset(2, 14);

  for (FusionMode fusion :
       {FusionMode::visual_only, FusionMode::av_concat, FusionMode::av_dwf}) {
    ModelConfig mc = tiny_config(fusion);
    Rng mrng(3);
    Detector model = Detector::init(mc, mrng);
    Rng patch_rng(7);
    const DetectorOutput out = model.forward_raw(data[0].face, data[0].audio, patch_rng);
    CHECK(out.prob.flat()[0] > 0.0);
    CHECK(out.prob.flat()[0] < 1.0);
    CHECK(out.fusion_log.has_value() == (fusion == FusionMode::av_dwf));
    if (out.fusion_log) CHECK(out.fusion_log->layers.size() == 2);
  }

  ModelConfig patch_cfg = tiny_config(FusionMode::av_dwf);
  patch_cfg.tokenizer = TokenizerMode::patch;
  Rng mrng(3);
  Detector patch_model = Detector::init(patch_cfg, mrng);
  Rng patch_rng(7);
  CHECK_NOTHROW(patch_model.forward_raw(data[0].face, data[0].audio, patch_rng));
  const ModelInput input = patch_model.prepare(data[0].face, data[0].audio);
  Tensor pixels = input.face_rows;
  Tensor samples = Tensor::from_flat({data[0].audio.samples.size()}, data[0].audio.samples);
  CHECK_THROWS_AS(patch_model.forward_graph(pixels, samples, patch_rng), ConfigError);

  Detector desk_model = [&] {
    ModelConfig mc = tiny_config(FusionMode::av_dwf);
    Rng r(3);
    return Detector::init(mc, r);
  }();
  FaceBlock wrong = data[0].face;
  wrong.t = 4;
  wrong.pixels = wrong.pixels.head(4 * wrong.c * wrong.h * wrong.w).eval();
  CHECK_THROWS_AS(desk_model.prepare(wrong, data[0].audio), ShapeError);
  AudioClip bad_rate = data[0].audio;
  bad_rate.sample_rate = 8000;
  CHECK_THROWS_AS(desk_model.prepare(data[0].face, bad_rate), ConfigError);
}

TEST_CASE("filter keeps the requested slice of a prepared set") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  Rng mrng(5);
  Detector model = Detector::init(mc, mrng);
  const PreparedDataset prep = prepare_dataset(model, tiny_dataset(24, 15));

  const PreparedDataset sub = filter_dataset(prep, true, ForgeryType::audio_only);
  CHECK(sub.size() > 0);
  Index reals = 0;
  for (Index i = 0; i < sub.size(); ++i) {
    const bool is_real = sub.forgery[i] == ForgeryType::none;
    reals += is_real;
    CHECK((is_real || sub.forgery[i] == ForgeryType::audio_only));
    CHECK(sub.labels[i] == (is_real ? 0 : 1));
  }
  CHECK(reals == 12);

  const PreparedDataset fakes_only = filter_dataset(prep, false, ForgeryType::desync);
  for (Index i = 0; i < fakes_only.size(); ++i) {
    CHECK(fakes_only.forgery[i] == ForgeryType::desync);
  }
}

TEST_CASE("history, fusion, metrics, and ablation files have the documented shape") {
  ModelConfig mc = tiny_config(FusionMode::av_dwf);
  Rng mrng(8);
  Detector model = Detector::init(mc, mrng);
  const PreparedDataset prep = prepare_dataset(model, tiny_dataset(8, 16));
  TrainConfig tc;
  tc.epochs = 2;
  const TrainOutcome out = train(model, prep, prep, tc);

  const auto hist_path = temp_file("avdet_test_history.csv");
  write_history_csv(hist_path.string(), out.history);
  std::ifstream hist(hist_path);
  std::string line;
  std::getline(hist, line);
  CHECK(line == "epoch,split,loss,acc");
  Index rows = 0;
  Real first_loss = -1;
  while (std::getline(hist, line)) {
    if (rows == 0) {
      std::stringstream ss(line);
      std::string epoch, split, loss;
      std::getline(ss, epoch, ',');
      std::getline(ss, split, ',');
      std::getline(ss, loss, ',');
      CHECK(split == "train");
      first_loss = std::stod(loss);
    }
    ++rows;
  }
  CHECK(rows == 4);  // train + val rows for two epochs
  CHECK(first_loss == out.history[0].train_loss);  // 17 digits round-trip

  const auto fusion_path = temp_file("avdet_test_fusion.csv");
  write_fusion_log_csv(fusion_path.string(), out.fusion_log);
  std::ifstream fus(fusion_path);
  std::getline(fus, line);
  CHECK(line == "epoch,batch,layer,head,w_f,w_a");

  const EvalResult ev = evaluate(model, prep, 31);
  const auto metrics_path = temp_file("avdet_test_metrics.json");
  write_metrics_json(metrics_path.string(), ev.metrics, {{"mean_loss", ev.mean_loss}});
  std::ifstream met(metrics_path);
  nlohmann::json parsed = nlohmann::json::parse(met);
  CHECK(parsed.contains("acc"));
  CHECK(parsed.contains("auc"));
  CHECK(parsed["confusion"].contains("tp"));
  CHECK(parsed["mean_loss"].get<Real>() == ev.mean_loss);

  Metrics one_class;
  one_class.acc = 1.0;
  const auto null_path = temp_file("avdet_test_metrics_null.json");
  write_metrics_json(null_path.string(), one_class);
  std::ifstream met2(null_path);
  nlohmann::json parsed2 = nlohmann::json::parse(met2);
  CHECK(parsed2["auc"].is_null());

  std::vector<AblationCell> cells = {{FusionMode::av_dwf, TokenizerMode::frame, 1, 0.9, 0.95,
                                      0.97, 1.5}};
  const auto ablate_path = temp_file("avdet_test_ablation.csv");
  write_ablation_csv(ablate_path.string(), cells);
  std::ifstream abl(ablate_path);
  std::getline(abl, line);
  CHECK(line == "fusion,tokenizer,seed,test_acc,test_auc,audio_subset_auc,seconds");
  std::getline(abl, line);
  CHECK(line.find("av_dwf,frame,1,") == 0);

  for (const auto& p : {hist_path, fusion_path, metrics_path, null_path, ablate_path}) {
    std::filesystem::remove(p);
  }
}

TEST_CASE("median helpers") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), EmptyInputError);

  std::vector<AblationCell> cells;
  for (std::uint64_t seed : {1, 2, 3}) {
    AblationCell cell;
    cell.fusion = FusionMode::av_dwf;
    cell.tokenizer = TokenizerMode::frame;
    cell.seed = seed;
    cell.test_auc = 0.5 + 0.1 * static_cast<Real>(seed);
    cells.push_back(cell);
    cell.fusion = FusionMode::av_concat;
    cell.test_auc = 0.1;
    cells.push_back(cell);
  }
  CHECK(median_metric(cells, FusionMode::av_dwf, TokenizerMode::frame, &AblationCell::test_auc) ==
        0.7);
  CHECK(median_metric(cells, FusionMode::av_concat, TokenizerMode::frame,
                      &AblationCell::test_auc) == 0.1);
}
