#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adgs2s/beam_search.hpp"
#include "adgs2s/metrics.hpp"
#include "adgs2s/model.hpp"

namespace adgs2s::model {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 50;
  /// Hard cap on optimiser steps; 0 means no cap beyond `max_epochs`.
  std::size_t max_steps = 0;
  /// Validation BLEU is computed every `interval` steps.
  std::size_t interval = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  bool teacher_forcing = true;
  bool reach_filter = false;
  std::size_t max_len = 200;
  nn::AdamConfig adam{};

  void validate() const {
    if (batch_size < 1 || max_epochs < 1 || interval < 1) throw InvalidInput("train: sizes must be positive");
    if (patience < 1) throw InvalidInput("train: patience must be >= 1");
    if (max_len < 1) throw InvalidInput("train: max_len must be >= 1");
  }
};

struct HistoryRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lrate = 0.0;
  std::optional<double> validation_bleu;
};

/// One line-delimited JSON record.
inline std::string format_record(const HistoryRecord& r) {
  char buf[160];
  if (r.validation_bleu)
    std::snprintf(buf, sizeof buf, "{\"step\": %zu, \"loss\": %.17g, \"lrate\": %.17g, \"validation_bleu\": %.17g}",
                  r.step, r.loss, r.lrate, *r.validation_bleu);
  else
    std::snprintf(buf, sizeof buf, "{\"step\": %zu, \"loss\": %.17g, \"lrate\": %.17g}", r.step, r.loss, r.lrate);
  return buf;
}

struct TrainResult {
  std::vector<HistoryRecord> history;
  std::size_t steps = 0;
  std::optional<double> best_validation_bleu;
  bool stopped_early = false;
};

/// Decodes one description. Width 1 is the greedy rollout.
inline std::vector<TokenId> generate(Seq2SeqModel& m, std::span<const TokenId> description, const Matrix& nodes,
                                     std::size_t width, std::size_t max_len, bool reach_filter = false) {
  Stepper stepper(m, description, nodes, reach_filter);
  return width == 1 ? decode::greedy(stepper, max_len).tokens : decode::beam_search(stepper, width, max_len).tokens;
}

inline std::vector<TokenId> generate(Seq2SeqModel& m, std::span<const TokenId> description, std::size_t width,
                                     std::size_t max_len, bool reach_filter = false) {
  const Matrix nodes = node_table(m);
  return generate(m, description, nodes, width, max_len, reach_filter);
}

/// Corpus BLEU of greedy decodes against the gold code.
inline double validation_bleu(Seq2SeqModel& m, std::span<const EncodedExample> data, std::size_t max_len,
                              bool reach_filter = false) {
  if (data.empty()) return 0.0;
  const Matrix nodes = node_table(m);
  std::vector<metrics::EvalPair> pairs;
  for (const auto& ex : data) {
    auto out = generate(m, ex.description, nodes, 1, max_len, reach_filter);
    pairs.push_back({m.code_vocab().decode(out), {m.code_vocab().decode(ex.code)}});
  }
  return metrics::bleu(pairs);
}

/// Joint training of encoder, embedder and decoder. Each batch recomputes
/// the embeddings of the nodes it references, takes one backward pass and
/// one Adam step. Every `interval` steps validation BLEU is measured; the
/// best parameters seen are restored at the end, and training stops after
/// `patience` checks without improvement or on a perfect score. Parameters
/// end on float32-representable values.
inline TrainResult train(Seq2SeqModel& m, std::span<const EncodedExample> data,
                         std::span<const EncodedExample> validation, const TrainConfig& config,
                         const std::function<void(const HistoryRecord&)>& on_record = {}) {
  config.validate();
  if (data.empty()) throw InvalidInput("train: empty corpus");
  Rng rng(config.seed);
  auto params = m.parameters();
  nn::Adam adam(params, config.adam);
  TrainResult result;
  std::vector<Matrix> best;
  std::size_t bad_checks = 0;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(p->value);
  };

  bool done = false;
  for (std::size_t epoch = 0; epoch < config.max_epochs && !done; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size() && !done; start += config.batch_size) {
      std::vector<EncodedExample> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) batch.push_back(data[order[k]]);
      m.zero_grad();
      Tape tape;
      Var loss = batch_loss(tape, m, batch, Mode::Train, &rng, config.teacher_forcing);
      const double value = loss.scalar();
      if (!std::isfinite(value)) throw TrainingError(result.steps + 1, "non-finite loss");
      tape.backward(loss);
      for (auto* p : params)
        if (!p->grad.allFinite()) throw TrainingError(result.steps + 1, "non-finite gradient in '" + p->name + "'");
      HistoryRecord rec{result.steps + 1, value, adam.step(), std::nullopt};
      ++result.steps;

      if (!validation.empty() && result.steps % config.interval == 0) {
        const double b = validation_bleu(m, validation, config.max_len, config.reach_filter);
        rec.validation_bleu = b;
        if (!result.best_validation_bleu || b > *result.best_validation_bleu) {
          result.best_validation_bleu = b;
          snapshot();
          bad_checks = 0;
        } else if (++bad_checks >= config.patience) {
          result.stopped_early = true;
          done = true;
        }
        if (b >= 1.0) {
          result.stopped_early = true;
          done = true;
        }
      }
      result.history.push_back(rec);
      if (on_record) on_record(rec);
      if (config.max_steps != 0 && result.steps >= config.max_steps) done = true;
    }
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  for (auto* p : params) {
    snap_to_float(p->value);
    p->zero_grad();
  }
  return result;
}

}  // namespace adgs2s::model
