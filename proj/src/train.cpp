// SPDX-License-Identifier: Apache-2.0

#include "avdet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace avdet {

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const NamedParam& p : params_) {
    m_.push_back(Vec::Zero(p.tensor.numel()));
    v_.push_back(Vec::Zero(p.tensor.numel()));
  }
}

void Adam::zero_grad() {
  for (NamedParam& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  ++t_;
  const Real bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    const Vec g = p.has_grad() ? p.grad() : Vec::Zero(p.numel());
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Vec m_hat = m_[i] / bc1;
    const Vec v_hat = v_[i] / bc2;
    p.leaf_values() -=
        cfg_.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
  }
}

void TrainConfig::validate() const {
  if (lr < 0) throw ConfigError("train: negative learning rate");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
}

PreparedDataset prepare_dataset(const Detector& model,
                                const std::vector<SyntheticSample>& samples) {
  PreparedDataset out;
  out.inputs.reserve(samples.size());
  out.labels.reserve(samples.size());
  out.forgery.reserve(samples.size());
  for (const SyntheticSample& s : samples) {
    out.inputs.push_back(model.prepare(s.face, s.audio));
    out.labels.push_back(s.label);
    out.forgery.push_back(s.forgery);
  }
  return out;
}

PreparedDataset filter_dataset(const PreparedDataset& data, bool keep_real,
                               ForgeryType fake_kind) {
  PreparedDataset out;
  for (Index i = 0; i < data.size(); ++i) {
    const bool real = data.forgery[i] == ForgeryType::none;
    if ((real && keep_real) || data.forgery[i] == fake_kind) {
      out.inputs.push_back(data.inputs[i]);
      out.labels.push_back(data.labels[i]);
      out.forgery.push_back(data.forgery[i]);
    }
  }
  return out;
}

namespace {

// Per-batch means of the logged per-head weights, flattened for the CSV.
void log_fusion_batch(std::vector<FusionBatchLog>& sink, Index epoch, Index batch,
                      const std::vector<FusionWeights>& batch_logs) {
  if (batch_logs.empty()) return;
  const std::size_t layers = batch_logs.front().layers.size();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t heads = batch_logs.front().layers[l].heads.size();
    for (std::size_t h = 0; h < heads; ++h) {
      Real wf = 0, wa = 0;
      for (const FusionWeights& fw : batch_logs) {
        wf += fw.layers[l].heads[h].w_f;
        wa += fw.layers[l].heads[h].w_a;
      }
      sink.push_back({epoch, batch, static_cast<Index>(l), static_cast<Index>(h),
                      wf / static_cast<Real>(batch_logs.size()),
                      wa / static_cast<Real>(batch_logs.size())});
    }
  }
}

}  // namespace

TrainOutcome train(Detector& model, const PreparedDataset& train_set,
                   const PreparedDataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  const Index n = train_set.size();
  if (n == 0) throw TrainingError("train: empty train split");

  Adam opt(model.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const Rng root(cfg.seed);
  TrainOutcome outcome;

  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = root.fork(static_cast<std::uint64_t>(epoch));
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    epoch_rng.shuffle(order);

    Real loss_sum = 0;
    Index correct = 0;
    Index batch_index = 0;
    for (Index start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const Index batch_n = std::min(cfg.batch_size, n - start);
      opt.zero_grad();
      Tensor batch_loss;
      std::vector<FusionWeights> batch_logs;
      try {
        for (Index b = 0; b < batch_n; ++b) {
          const Index idx = order[start + b];
          Rng patch_rng = epoch_rng.fork(static_cast<std::uint64_t>(idx));
          DetectorOutput out = model.forward(train_set.inputs[idx], patch_rng);
          const int label = train_set.labels[idx];
          const Real p = out.prob.item();
          if ((p >= 0.5) == (label != 0)) ++correct;
          if (out.fusion_log) batch_logs.push_back(*out.fusion_log);
          Tensor sample_loss = bce_with_logits(out.logit, static_cast<Real>(label));
          batch_loss = batch_loss.defined() ? add(batch_loss, sample_loss) : sample_loss;
        }
        batch_loss = scale(batch_loss, 1.0 / static_cast<Real>(batch_n));
        backward(batch_loss);
      } catch (const NumericError& e) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }
      opt.step();
      loss_sum += batch_loss.item() * static_cast<Real>(batch_n);
      log_fusion_batch(outcome.fusion_log, epoch, batch_index, batch_logs);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<Real>(n);
    stats.train_acc = static_cast<Real>(correct) / static_cast<Real>(n);
    if (val_set.size() > 0) {
      const EvalResult val =
          evaluate(model, val_set, cfg.seed + 1000003 * static_cast<std::uint64_t>(epoch));
      stats.val_loss = val.mean_loss;
      stats.val_acc = val.metrics.acc;
    }
    outcome.history.push_back(stats);
  }
  return outcome;
}

EvalResult evaluate(const Detector& model, const PreparedDataset& data,
                    std::uint64_t patch_seed) {
  NoGradGuard guard;
  const Rng root(patch_seed);
  EvalResult result;
  result.labels = data.labels;
  result.scores.reserve(data.inputs.size());
  Real loss_sum = 0;
  for (Index i = 0; i < data.size(); ++i) {
    Rng patch_rng = root.fork(static_cast<std::uint64_t>(i));
    DetectorOutput out = model.forward(data.inputs[i], patch_rng);
    result.scores.push_back(out.prob.item());
    loss_sum += bce_with_logits(out.logit, static_cast<Real>(data.labels[i])).item();
  }
  result.metrics = compute_metrics(result.scores, result.labels);
  result.mean_loss = loss_sum / static_cast<Real>(data.size());
  return result;
}

std::vector<Index> largest_remainder_counts(Index n, const std::vector<Real>& fracs) {
  if (n < 0) throw ConfigError("allocation: negative item count");
  if (fracs.empty()) throw EmptyInputError("allocation: no fractions");
  Real sum = 0;
  for (Real f : fracs) {
    if (f < 0) throw ConfigError("allocation: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("allocation: fractions must sum to 1");

  const size_t k = fracs.size();
  std::vector<Index> counts(k);
  std::vector<Real> remainders(k);
  Index assigned = 0;
  for (size_t i = 0; i < k; ++i) {
    const Real exact = fracs[i] * static_cast<Real>(n);
    counts[i] = static_cast<Index>(std::floor(exact));
    remainders[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  while (assigned < n) {
    size_t best = 0;
    for (size_t i = 1; i < k; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1;
    ++assigned;
  }
  return counts;
}

DataSplits split_dataset(std::vector<SyntheticSample> samples, std::uint64_t seed,
                         Real train_frac, Real val_frac, Real test_frac) {
  if (samples.empty()) throw EmptyInputError("split: no samples");
  std::vector<Index> counts;
  try {
    counts = largest_remainder_counts(static_cast<Index>(samples.size()),
                                      {train_frac, val_frac, test_frac});
  } catch (const ConfigError&) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
  Rng rng(seed);
  rng.shuffle(samples);

  DataSplits splits;
  auto it = samples.begin();
  splits.train.assign(it, it + counts[0]);
  it += counts[0];
  splits.val.assign(it, it + counts[1]);
  it += counts[1];
  splits.test.assign(it, it + counts[2]);
  return splits;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17) << "epoch,split,loss,acc\n";
  for (const EpochStats& e : history) {
    out << e.epoch << ",train," << e.train_loss << "," << e.train_acc << "\n";
    out << e.epoch << ",val," << e.val_loss << "," << e.val_acc << "\n";
  }
}

void write_fusion_log_csv(const std::string& path, const std::vector<FusionBatchLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17) << "epoch,batch,layer,head,w_f,w_a\n";
  for (const FusionBatchLog& r : log) {
    out << r.epoch << "," << r.batch << "," << r.layer << "," << r.head << "," << r.w_f << ","
        << r.w_a << "\n";
  }
}

void write_metrics_json(const std::string& path, const Metrics& metrics,
                        const std::vector<std::pair<std::string, Real>>& extra) {
  nlohmann::json j;
  j["acc"] = metrics.acc;
  if (metrics.auc) {
    j["auc"] = *metrics.auc;
  } else {
    j["auc"] = nullptr;
  }
  j["confusion"] = {{"tp", metrics.confusion.tp},
                    {"tn", metrics.confusion.tn},
                    {"fp", metrics.confusion.fp},
                    {"fn", metrics.confusion.fn}};
  for (const auto& [key, value] : extra) j[key] = value;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<AblationCell> run_ablation(const AblationSpec& spec, std::ostream* progress) {
  std::vector<AblationCell> cells;
  for (const std::uint64_t seed : spec.seeds) {
    // One dataset per seed, shared by every grid cell for a fair comparison.
    ModelConfig prep_cfg = spec.model;
    prep_cfg.fusion = FusionMode::av_dwf;  // prepare() fills audio for everyone
    Rng prep_rng(seed);
    const Detector prep_model = Detector::init(prep_cfg, prep_rng);

    const SynthConfig synth = SynthConfig::for_model(spec.model);
    DataSplits splits = split_dataset(generate_dataset(spec.n_samples, seed, spec.mix, synth),
                                      seed);
    const PreparedDataset train_set = prepare_dataset(prep_model, splits.train);
    const PreparedDataset val_set = prepare_dataset(prep_model, splits.val);
    const PreparedDataset test_set = prepare_dataset(prep_model, splits.test);
    const PreparedDataset audio_subset =
        filter_dataset(test_set, true, ForgeryType::audio_only);

    for (const auto& [fusion, tokenizer] : spec.grid) {
      const auto t0 = std::chrono::steady_clock::now();
      ModelConfig cell_cfg = spec.model;
      cell_cfg.fusion = fusion;
      cell_cfg.tokenizer = tokenizer;
      cell_cfg.weight_mode = spec.train.weight_mode;
      Rng model_rng(seed);
      Detector model = Detector::init(cell_cfg, model_rng);

      TrainConfig tc = spec.train;
      tc.seed = seed;
      tc.fusion = fusion;
      tc.tokenizer = tokenizer;
      train(model, train_set, val_set, tc);

      AblationCell cell;
      cell.fusion = fusion;
      cell.tokenizer = tokenizer;
      cell.seed = seed;
      const EvalResult full = evaluate(model, test_set, seed + 77);
      cell.test_acc = full.metrics.acc;
      cell.test_auc = full.metrics.auc.value_or(std::numeric_limits<Real>::quiet_NaN());
      const EvalResult sub = evaluate(model, audio_subset, seed + 78);
      cell.audio_subset_auc =
          sub.metrics.auc.value_or(std::numeric_limits<Real>::quiet_NaN());
      cell.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
      cells.push_back(cell);
      if (progress) {
        *progress << "[seed " << seed << "] " << to_string(fusion) << "/"
                  << to_string(tokenizer) << " test_auc=" << cell.test_auc
                  << " audio_subset_auc=" << cell.audio_subset_auc << " ("
                  << cell.seconds << " s)\n";
      }
    }
  }
  return cells;
}

Real median(std::vector<Real> values) {
  if (values.empty()) throw EmptyInputError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2;
}

Real median_metric(const std::vector<AblationCell>& cells, FusionMode fusion,
                   TokenizerMode tokenizer, Real AblationCell::* field) {
  std::vector<Real> values;
  for (const AblationCell& c : cells) {
    if (c.fusion == fusion && c.tokenizer == tokenizer) values.push_back(c.*field);
  }
  return median(std::move(values));
}

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(17)
      << "fusion,tokenizer,seed,test_acc,test_auc,audio_subset_auc,seconds\n";
  for (const AblationCell& c : cells) {
    out << to_string(c.fusion) << "," << to_string(c.tokenizer) << "," << c.seed << ","
        << c.test_acc << "," << c.test_auc << "," << c.audio_subset_auc << "," << c.seconds
        << "\n";
  }
}

}  // namespace avdet
