#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinessl/datagen/dataset.hpp"
#include "sinessl/models/classifier.hpp"
#include "sinessl/models/params.hpp"
#include "sinessl/numerics/graph.hpp"
#include "sinessl/numerics/sgd.hpp"
#include "sinessl/schedulers/threshold.hpp"
#include "sinessl/ssl/augment.hpp"

namespace sinessl {

struct TrainConfig {
  std::size_t labeled_batch = 8;
  /// Unlabeled batch = labeled_batch * mu.
  std::size_t mu = 4;
  double lambda_u = 1.0;
  std::size_t iterations = 5000;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  std::size_t eval_every = 250;
  ClassifierConfig model;
  AugmentationSpec augment;

  std::size_t unlabeled_batch() const { return labeled_batch * mu; }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep the values already in `c`.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct PseudoLabelDecision {
  double max_prob = 0.0;
  std::size_t argmax_class = 0;
  bool accepted = false;
  double threshold_used = 0.0;
};

/// Argmax with the lowest index winning ties; accepted iff max >= threshold.
/// Throws ContractError unless probs is a distribution (sums to 1 within
/// 1e-6, entries in [0, 1]).
PseudoLabelDecision pseudo_label(std::span<const double> probs, double threshold);

struct ConsistencyTerm {
  Var loss;
  double mask_rate = 0.0;
};

/// sum over accepted items of CE(strong_logits, pseudo class), divided by
/// the full batch size. weak_probs: [Bu, C], computed without gradients.
ConsistencyTerm consistency_loss(const Tensor& weak_probs, Var strong_logits, double threshold);

struct RunRecord {
  std::size_t iter = 0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double mask_rate = 0.0;
  double threshold = 0.0;
  double test_accuracy = 0.0;
};

inline constexpr const char* kMetricsHeader = "iter,loss_sup,loss_unsup,mask_rate,threshold,test_accuracy";

/// One row of metrics.csv, without newline.
std::string format_record(const RunRecord& r);
std::vector<RunRecord> read_metrics_csv(const std::filesystem::path& path);

struct TrainState {
  ModelParams student;
  ModelParams ema;
  SgdState optimizer;
  ThresholdSchedule schedule;
};

TrainState init_train_state(const TrainConfig& cfg, const ThresholdSchedule& schedule);

/// Batches for one iteration. The unlabeled views may be empty when
/// lambda_u is zero.
struct StepBatch {
  Tensor labeled;
  std::vector<std::size_t> labels;
  Tensor unlabeled_weak;
  Tensor unlabeled_strong;
};

struct StepResult {
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double mask_rate = 0.0;
  double threshold = 0.0;
  /// Confidence of each weak-view prediction, empty without unlabeled data.
  std::vector<double> weak_max_probs;
};

/// Threshold for this step: threshold_at for the stateless schedules, one
/// adaptive_update on the weak-view confidences for AdaptiveAscent.
/// Then one SGD step on CE(labeled) + lambda_u * consistency, and an EMA
/// update.
StepResult train_step(TrainState& state, const StepBatch& batch, const IterationClock& clock, const TrainConfig& cfg);

/// Assembles the batch of iteration `iter` from per-iteration streams:
/// labeled and unlabeled items are drawn uniformly with replacement.
StepBatch draw_batch(const DatasetBundle& data, const TrainConfig& cfg, std::size_t iter);

struct EvalResult {
  double accuracy = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Argmax accuracy of `params` on a labeled split, without augmentation.
EvalResult evaluate(const ModelParams& params, const LabeledSplit& split, const ClassifierConfig& cfg);

struct TraceRow {
  std::size_t iter = 0;
  double threshold = 0.0;
  double mask_rate = 0.0;
};

struct RunResult {
  std::vector<RunRecord> records;
  std::vector<TraceRow> trace;
  TrainState state;
  EvalResult final_eval;
};

/// Runs cfg.iterations steps (i = 1..i_max on the clock). A metrics row is
/// logged every eval_every iterations and after the last one, carrying the
/// mean losses and mask rate since the previous row. The trace has one row
/// per iteration plus a row 0 holding the initial threshold and its
/// acceptance rate on the first weak batch.
///
/// With `out_dir`, writes metrics.csv, trace.csv, confusion.csv and the EMA
/// checkpoint/. Throws ConfigError if the splits share an id.
RunResult train_run(const TrainConfig& cfg, const DatasetBundle& data, const ThresholdSchedule& schedule,
                    const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace sinessl
