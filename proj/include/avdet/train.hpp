// SPDX-License-Identifier: Apache-2.0
//
// Training and evaluation harness: Adam on mean binary cross-entropy over
// shuffled mini-batches, per-epoch train/val statistics, rank-based metrics,
// dataset splitting, and the ablation grid runner. Everything is
// deterministic given the seeds it is handed.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "avdet/metrics.hpp"
#include "avdet/model.hpp"
#include "avdet/synth.hpp"

namespace avdet {

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

/// Standard bias-corrected Adam. A missing gradient counts as zero.
class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg);

  void zero_grad();
  void step();

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<Vec> m_;
  std::vector<Vec> v_;
  long t_ = 0;
};

struct TrainConfig {
  Real lr = 1e-3;
  Index epochs = 50;
  Index batch_size = 8;
  std::uint64_t seed = 1;
  WeightMode weight_mode = WeightMode::received;
  TokenizerMode tokenizer = TokenizerMode::frame;
  FusionMode fusion = FusionMode::av_dwf;

  /// lr may be zero (a documented no-op) but never negative.
  void validate() const;
};

struct PreparedDataset {
  std::vector<ModelInput> inputs;
  std::vector<int> labels;
  std::vector<ForgeryType> forgery;

  Index size() const { return static_cast<Index>(inputs.size()); }
};

PreparedDataset prepare_dataset(const Detector& model, const std::vector<SyntheticSample>& samples);

/// Keeps entries whose forgery type passes the predicate; real samples are
/// kept when keep_real is set.
PreparedDataset filter_dataset(const PreparedDataset& data, bool keep_real, ForgeryType fake_kind);

struct EpochStats {
  Index epoch = 0;
  Real train_loss = 0;
  Real train_acc = 0;
  Real val_loss = 0;
  Real val_acc = 0;
};

struct FusionBatchLog {
  Index epoch = 0;
  Index batch = 0;
  Index layer = 0;
  Index head = 0;
  Real w_f = 0;  // batch means
  Real w_a = 0;
};

struct TrainOutcome {
  std::vector<EpochStats> history;
  std::vector<FusionBatchLog> fusion_log;
};

/// Trains in place. Throws TrainingError on an empty train split or when the
/// loss goes non-finite (with epoch/batch context).
TrainOutcome train(Detector& model, const PreparedDataset& train_set,
                   const PreparedDataset& val_set, const TrainConfig& cfg);

struct EvalResult {
  Metrics metrics;
  std::vector<Real> scores;
  std::vector<int> labels;
  Real mean_loss = 0;
};

EvalResult evaluate(const Detector& model, const PreparedDataset& data, std::uint64_t patch_seed);

struct DataSplits {
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> val;
  std::vector<SyntheticSample> test;
};

/// Integer allocation of n items to non-negative fractions summing to one:
/// floors first, then largest remainders take the leftover, earliest slot
/// winning ties. Counts always sum to n.
std::vector<Index> largest_remainder_counts(Index n, const std::vector<Real>& fracs);

/// Shuffled split at the given proportions (largest remainder, so 10 samples
/// at 0.7/0.1/0.2 give exactly 7/1/2).
DataSplits split_dataset(std::vector<SyntheticSample> samples, std::uint64_t seed,
                         Real train_frac = 0.7, Real val_frac = 0.1, Real test_frac = 0.2);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);
void write_fusion_log_csv(const std::string& path, const std::vector<FusionBatchLog>& log);
void write_metrics_json(const std::string& path, const Metrics& metrics,
                        const std::vector<std::pair<std::string, Real>>& extra = {});

struct AblationCell {
  FusionMode fusion = FusionMode::av_dwf;
  TokenizerMode tokenizer = TokenizerMode::frame;
  std::uint64_t seed = 0;
  Real test_acc = 0;
  Real test_auc = 0;
  Real audio_subset_auc = 0;  // real + audio_only test samples
  Real seconds = 0;
};

struct AblationSpec {
  ModelConfig model;
  TrainConfig train;
  Index n_samples = 480;
  ForgeryMix mix{};
  std::vector<std::pair<FusionMode, TokenizerMode>> grid;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

/// Trains one model per (grid cell, seed) on a shared per-seed dataset and
/// reports test metrics. progress, when given, receives one line per cell.
std::vector<AblationCell> run_ablation(const AblationSpec& spec, std::ostream* progress);

Real median(std::vector<Real> values);

/// Median over seeds of the named field for one grid cell.
Real median_metric(const std::vector<AblationCell>& cells, FusionMode fusion,
                   TokenizerMode tokenizer, Real AblationCell::* field);

void write_ablation_csv(const std::string& path, const std::vector<AblationCell>& cells);

}  // namespace avdet
