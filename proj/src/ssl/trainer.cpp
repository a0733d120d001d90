#include "sinessl/ssl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sinessl/errors.hpp"
#include "sinessl/numerics/ops.hpp"

namespace sinessl {
namespace {

enum StreamTag : std::uint64_t { kInitTag = 11, kLabeledBatchTag = 12, kUnlabeledBatchTag = 13 };

constexpr std::size_t kEvalChunk = 100;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

}  // namespace

void TrainConfig::validate() const {
  if (labeled_batch == 0) throw ConfigError("labeled_batch must be positive");
  if (mu == 0) throw ConfigError("mu must be positive");
  if (!(lambda_u >= 0.0)) throw ConfigError("lambda_u must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  model.validate();
  augment.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"labeled_batch", c.labeled_batch}, {"mu", c.mu},
       {"lambda_u", c.lambda_u},           {"iterations", c.iterations},
       {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
       {"ema_decay", c.ema_decay},         {"seed", c.seed},
       {"eval_every", c.eval_every},       {"model", c.model},
       {"augment", c.augment}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    c.labeled_batch = j.value("labeled_batch", c.labeled_batch);
    c.mu = j.value("mu", c.mu);
    c.lambda_u = j.value("lambda_u", c.lambda_u);
    c.iterations = j.value("iterations", c.iterations);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("augment")) j.at("augment").get_to(c.augment);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
}

PseudoLabelDecision pseudo_label(std::span<const double> probs, double threshold) {
  if (probs.empty()) throw ContractError("pseudo_label needs a nonempty distribution");
  double total = 0.0;
  PseudoLabelDecision d;
  d.threshold_used = threshold;
  d.max_prob = -1.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (!(probs[c] >= 0.0 && probs[c] <= 1.0)) throw ContractError("probability outside [0, 1]");
    total += probs[c];
    if (probs[c] > d.max_prob) {
      d.max_prob = probs[c];
      d.argmax_class = c;
    }
  }
  if (std::fabs(total - 1.0) > 1e-6) throw ContractError("probabilities sum to " + std::to_string(total));
  d.accepted = d.max_prob >= threshold;
  return d;
}

ConsistencyTerm consistency_loss(const Tensor& weak_probs, Var strong_logits, double threshold) {
  if (weak_probs.rank() != 2 || weak_probs.dim(0) == 0) {
    throw ContractError("consistency_loss needs a nonempty [Bu, C] probability batch");
  }
  const std::size_t bu = weak_probs.dim(0), c = weak_probs.dim(1);
  if (strong_logits.shape() != weak_probs.shape()) {
    throw DimensionError("strong logits " + shape_to_string(strong_logits.shape()) + " vs weak probs " +
                         shape_to_string(weak_probs.shape()));
  }
  std::vector<std::size_t> targets(bu);
  std::vector<double> weights(bu);
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < bu; ++i) {
    const auto d = pseudo_label(weak_probs.data().subspan(i * c, c), threshold);
    targets[i] = d.argmax_class;
    weights[i] = d.accepted ? 1.0 : 0.0;
    accepted += d.accepted;
  }
  return {ops::softmax_cross_entropy(strong_logits, targets, weights),
          static_cast<double>(accepted) / static_cast<double>(bu)};
}

std::string format_record(const RunRecord& r) {
  return std::to_string(r.iter) + ',' + fmt(r.loss_sup) + ',' + fmt(r.loss_unsup) + ',' + fmt(r.mask_rate) + ',' +
         fmt(r.threshold) + ',' + fmt(r.test_accuracy);
}

std::vector<RunRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw IoError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<RunRecord> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    RunRecord r;
    char c1, c2, c3, c4, c5;
    row >> r.iter >> c1 >> r.loss_sup >> c2 >> r.loss_unsup >> c3 >> r.mask_rate >> c4 >> r.threshold >> c5 >>
        r.test_accuracy;
    if (!row) throw IoError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

TrainState init_train_state(const TrainConfig& cfg, const ThresholdSchedule& schedule) {
  cfg.validate();
  validate(schedule);
  Rng rng(cfg.seed, stream_key(kInitTag, 0));
  ModelParams student = init_classifier(cfg.model, rng);
  ModelParams ema = student.clone();
  return TrainState{std::move(student), std::move(ema), SgdState(cfg.learning_rate, cfg.momentum), schedule};
}

StepBatch draw_batch(const DatasetBundle& data, const TrainConfig& cfg, std::size_t iter) {
  if (data.labeled.size() == 0) throw ContractError("labeled split is empty");
  StepBatch b;
  Rng lrng(cfg.seed, stream_key(kLabeledBatchTag, iter));
  const auto li = draw_indices(lrng, data.labeled.size(), cfg.labeled_batch);
  b.labeled = augment_batch(data.labeled.images, li, false, cfg.augment, lrng);
  for (auto i : li) b.labels.push_back(data.labeled.labels[i]);
  if (cfg.lambda_u > 0.0) {
    if (data.unlabeled.size() == 0) throw ContractError("unlabeled pool is empty");
    Rng urng(cfg.seed, stream_key(kUnlabeledBatchTag, iter));
    const auto ui = draw_indices(urng, data.unlabeled.size(), cfg.unlabeled_batch());
    b.unlabeled_weak = augment_batch(data.unlabeled.images, ui, false, cfg.augment, urng);
    b.unlabeled_strong = augment_batch(data.unlabeled.images, ui, true, cfg.augment, urng);
  }
  return b;
}

StepResult train_step(TrainState& state, const StepBatch& batch, const IterationClock& clock, const TrainConfig& cfg) {
  StepResult res;
  auto* adaptive = std::get_if<schedule::AdaptiveAscent>(&state.schedule);
  const bool use_unlabeled = cfg.lambda_u > 0.0 && !batch.unlabeled_weak.empty();

  Tensor weak_probs;
  if (use_unlabeled) {
    weak_probs = ops::softmax(classifier_logits(state.student, batch.unlabeled_weak, cfg.model));
    const std::size_t c = weak_probs.dim(1);
    for (std::size_t i = 0; i < weak_probs.dim(0); ++i) {
      double m = 0.0;
      for (std::size_t k = 0; k < c; ++k) m = std::max(m, weak_probs[i * c + k]);
      res.weak_max_probs.push_back(m);
    }
  }
  if (adaptive) {
    res.threshold = res.weak_max_probs.empty() ? adaptive->tau : adaptive_update(*adaptive, res.weak_max_probs);
  } else {
    res.threshold = threshold_at(state.schedule, clock);
  }

  Graph g;
  Var sup = ops::softmax_cross_entropy(classifier_forward(g, state.student, g.view(batch.labeled), cfg.model),
                                       batch.labels);
  Var total = sup;
  res.loss_sup = sup.value().item();
  if (use_unlabeled) {
    Var strong = classifier_forward(g, state.student, g.view(batch.unlabeled_strong), cfg.model);
    ConsistencyTerm term = consistency_loss(weak_probs, strong, res.threshold);
    res.loss_unsup = term.loss.value().item();
    res.mask_rate = term.mask_rate;
    total = ops::add(sup, ops::scale(term.loss, cfg.lambda_u));
  }
  g.backward(total);
  auto params = state.student.tensors();
  sgd_step(params, state.optimizer);
  ModelParams::ema_update(state.ema, state.student, cfg.ema_decay);
  return res;
}

EvalResult evaluate(const ModelParams& params, const LabeledSplit& split, const ClassifierConfig& cfg) {
  if (split.size() == 0) throw ContractError("evaluation split is empty");
  const std::size_t per = split.images.numel() / split.size();
  EvalResult r;
  r.confusion.assign(cfg.num_classes, std::vector<std::size_t>(cfg.num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t start = 0; start < split.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, split.size() - start);
    Shape shape = split.images.shape();
    shape[0] = n;
    std::vector<double> chunk(split.images.data().begin() + start * per,
                              split.images.data().begin() + (start + n) * per);
    const Tensor logits = classifier_logits(params, Tensor(shape, std::move(chunk)), cfg);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < cfg.num_classes; ++k) {
        if (logits[i * cfg.num_classes + k] > logits[i * cfg.num_classes + best]) best = k;
      }
      const std::size_t truth = split.labels[start + i];
      if (truth >= cfg.num_classes) throw IndexError("label " + std::to_string(truth) + " out of range");
      ++r.confusion[truth][best];
      correct += best == truth;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  return r;
}

RunResult train_run(const TrainConfig& cfg, const DatasetBundle& data, const ThresholdSchedule& schedule,
                    const std::optional<std::filesystem::path>& out_dir) {
  check_disjoint(data);
  if (data.num_classes != cfg.model.num_classes) {
    throw ConfigError("bundle has " + std::to_string(data.num_classes) + " classes, model expects " +
                      std::to_string(cfg.model.num_classes));
  }
  RunResult run{{}, {}, init_train_state(cfg, schedule), {}};
  TrainState& state = run.state;
  const double initial = initial_threshold(schedule);

  double sum_sup = 0.0, sum_unsup = 0.0, sum_mask = 0.0;
  std::size_t window = 0;
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    const IterationClock clock(i, cfg.iterations);
    const StepResult step = train_step(state, draw_batch(data, cfg, i), clock, cfg);
    if (i == 1) {
      std::size_t accepted = 0;
      for (double m : step.weak_max_probs) accepted += m >= initial;
      const double rate =
          step.weak_max_probs.empty() ? 0.0 : static_cast<double>(accepted) / step.weak_max_probs.size();
      run.trace.push_back({0, initial, rate});
    }
    run.trace.push_back({i, step.threshold, step.mask_rate});
    sum_sup += step.loss_sup;
    sum_unsup += step.loss_unsup;
    sum_mask += step.mask_rate;
    ++window;
    if (i % cfg.eval_every == 0 || i == cfg.iterations) {
      const double n = static_cast<double>(window);
      run.records.push_back({i, sum_sup / n, sum_unsup / n, sum_mask / n, step.threshold,
                             evaluate(state.ema, data.test, cfg.model).accuracy});
      sum_sup = sum_unsup = sum_mask = 0.0;
      window = 0;
    }
  }
  run.final_eval = evaluate(state.ema, data.test, cfg.model);

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    auto metrics = open_out(*out_dir / "metrics.csv");
    metrics << kMetricsHeader << '\n';
    for (const auto& r : run.records) metrics << format_record(r) << '\n';
    auto trace = open_out(*out_dir / "trace.csv");
    trace << "iter,threshold,mask_rate\n";
    for (const auto& t : run.trace) trace << t.iter << ',' << fmt(t.threshold) << ',' << fmt(t.mask_rate) << '\n';
    auto confusion = open_out(*out_dir / "confusion.csv");
    confusion << "true_class,predicted_class,count\n";
    for (std::size_t a = 0; a < run.final_eval.confusion.size(); ++a)
      for (std::size_t b = 0; b < run.final_eval.confusion[a].size(); ++b)
        confusion << a << ',' << b << ',' << run.final_eval.confusion[a][b] << '\n';
    save_checkpoint(*out_dir / "checkpoint", state.ema, "classifier", nlohmann::json(cfg.model));
  }
  return run;
}

}  // namespace sinessl
