#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "adgs2s/checkpoint.hpp"
#include "adgs2s/metrics.hpp"
#include "adgs2s/synthetic.hpp"
#include "adgs2s/train.hpp"

namespace adgs2s::pipeline {

struct Paths {
  std::string signatures;
  std::string train;
  std::string valid;
  std::string test;
  std::string checkpoint;
  std::string graph;
  std::string embeddings;
  std::string history;
};

struct DecodeConfig {
  std::size_t beam = 5;
  std::size_t max_len = 200;
  bool reach_filter = false;
  std::size_t workers = 1;
};

struct PipelineConfig {
  Paths paths;
  model::ModelConfig model;
  model::TrainConfig train;
  DecodeConfig decode;
  std::uint64_t seed = 1;

  PipelineConfig() {
    model.word_dim = 100;
    model.code_dim = 100;
    model.hidden = 256;
    model.mlp_hidden = 256;
    model.embedder.dim = model.code_dim;
    train.adam.d_model = static_cast<double>(model.hidden);
  }

  void validate() const {
    model.validate();
    train.validate();
    if (decode.beam < 1) throw ConfigError("decode.beam must be >= 1");
    if (decode.max_len < 1) throw ConfigError("decode.max_len must be >= 1");
    if (decode.workers < 1) throw ConfigError("decode.workers must be >= 1");
  }
};

namespace detail {

using nlohmann::json;

template <class T>
void take(const json& obj, const char* key, T& into) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      into = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [k, v] : obj.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      throw ConfigError("unknown config key '" + where + "." + k + "'");
}

}  // namespace detail

/// Applies a JSON document on top of `config`. Unknown keys are errors.
inline void apply_json(PipelineConfig& config, const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::only_keys(doc, "", {"paths", "model", "embedder", "train", "decode", "seed"});
  detail::take(doc, "seed", config.seed);
  if (doc.contains("paths")) {
    const auto& p = doc["paths"];
    detail::only_keys(p, "paths", {"signatures", "train", "valid", "test", "checkpoint", "graph", "embeddings", "history"});
    detail::take(p, "signatures", config.paths.signatures);
    detail::take(p, "train", config.paths.train);
    detail::take(p, "valid", config.paths.valid);
    detail::take(p, "test", config.paths.test);
    detail::take(p, "checkpoint", config.paths.checkpoint);
    detail::take(p, "graph", config.paths.graph);
    detail::take(p, "embeddings", config.paths.embeddings);
    detail::take(p, "history", config.paths.history);
  }
  if (doc.contains("model")) {
    const auto& m = doc["model"];
    detail::only_keys(m, "model", {"word_dim", "code_dim", "hidden", "mlp_hidden", "window_layers", "half_window", "dropout"});
    detail::take(m, "word_dim", config.model.word_dim);
    detail::take(m, "code_dim", config.model.code_dim);
    detail::take(m, "hidden", config.model.hidden);
    detail::take(m, "mlp_hidden", config.model.mlp_hidden);
    detail::take(m, "window_layers", config.model.window_layers);
    detail::take(m, "half_window", config.model.half_window);
    detail::take(m, "dropout", config.model.dropout);
    config.train.adam.d_model = static_cast<double>(config.model.hidden);
  }
  config.model.embedder.dim = config.model.code_dim;
  if (doc.contains("embedder")) {
    const auto& e = doc["embedder"];
    detail::only_keys(e, "embedder",
                      {"hops", "aggregator", "virtualization", "concat_cap", "direction", "labels", "activation"});
    detail::take(e, "hops", config.model.embedder.hops);
    detail::take(e, "concat_cap", config.model.embedder.concat_cap);
    detail::take(e, "direction", config.model.embedder.use_edge_direction);
    detail::take(e, "labels", config.model.embedder.use_edge_labels);
    try {
      if (e.contains("aggregator")) config.model.embedder.aggregator = embed::parse_aggregator(e["aggregator"].get<std::string>());
      if (e.contains("virtualization"))
        config.model.embedder.virtualization = embed::parse_virtualization(e["virtualization"].get<std::string>());
      if (e.contains("activation")) config.model.embedder.activation = embed::parse_activation(e["activation"].get<std::string>());
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("embedder: ") + ex.what());
    }
  }
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    detail::only_keys(t, "train",
                      {"batch_size", "max_epochs", "max_steps", "interval", "patience", "teacher_forcing", "warmup",
                       "d_model", "lr_scale"});
    detail::take(t, "batch_size", config.train.batch_size);
    detail::take(t, "max_epochs", config.train.max_epochs);
    detail::take(t, "max_steps", config.train.max_steps);
    detail::take(t, "interval", config.train.interval);
    detail::take(t, "patience", config.train.patience);
    detail::take(t, "teacher_forcing", config.train.teacher_forcing);
    detail::take(t, "warmup", config.train.adam.warmup_steps);
    detail::take(t, "d_model", config.train.adam.d_model);
    detail::take(t, "lr_scale", config.train.adam.scale);
  }
  if (doc.contains("decode")) {
    const auto& d = doc["decode"];
    detail::only_keys(d, "decode", {"beam", "max_len", "reach_filter", "workers"});
    detail::take(d, "beam", config.decode.beam);
    detail::take(d, "max_len", config.decode.max_len);
    detail::take(d, "reach_filter", config.decode.reach_filter);
    detail::take(d, "workers", config.decode.workers);
  }
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path, const char* role) {
  if (path.empty()) throw ConfigError(std::string("no ") + role + " path configured");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + role + " file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

/// Parse errors carry the file name in front of the line/column message.
template <class F>
auto with_file(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), path + ": " + std::string(e.what()));
  } catch (const ConstructionError& e) {
    throw ConstructionError(path + ": " + e.what());
  }
}

inline ingest::SignatureCorpus load_signatures(const PipelineConfig& c) {
  const auto text = read_file(c.paths.signatures, "signatures");
  return with_file(c.paths.signatures, [&] { return ingest::parse_signatures(text); });
}

inline graph::Adg load_adg(const PipelineConfig& c) {
  auto sigs = load_signatures(c);
  return with_file(c.paths.signatures, [&] { return sigs.build_graph(); });
}

inline std::vector<ingest::Example> load_dataset(const std::string& path, const char* role) {
  const auto text = read_file(path, role);
  return with_file(path, [&] { return ingest::read_dataset(text); });
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline std::string format_statistics(const graph::GraphStatistics& s) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "Nodes %zu\nEdges %zu\nMax.in %zu\nAvg.in %.4f\nMax.out %zu\nAvg.out %.4f\n", s.nodes,
                s.edges, s.max_in, s.avg_in, s.max_out, s.avg_out);
  return buf;
}

/// Builds the graph, writes its dump when a graph path is configured, and
/// returns the statistics.
inline graph::GraphStatistics cmd_build_graph(const PipelineConfig& c) {
  const auto g = load_adg(c);
  if (!c.paths.graph.empty()) write_file(c.paths.graph, graph::dump_graph(g));
  return graph::statistics(g);
}

/// Vocabularies from the training data, a fresh model, and its encoded
/// training and validation sets.
struct Prepared {
  std::unique_ptr<model::Seq2SeqModel> model;
  std::vector<model::EncodedExample> train;
  std::vector<model::EncodedExample> valid;
};

inline Prepared prepare(const PipelineConfig& c) {
  c.validate();
  // Every input is read before any work starts.
  auto g = load_adg(c);
  auto train = load_dataset(c.paths.train, "training");
  std::vector<ingest::Example> valid;
  if (!c.paths.valid.empty()) valid = load_dataset(c.paths.valid, "validation");
  if (train.empty()) throw InvalidInput("training set is empty");
  std::vector<std::vector<std::string>> descs, codes;
  for (const auto& e : train) {
    descs.push_back(e.description);
    codes.push_back(e.code);
  }
  Prepared p;
  p.model = std::make_unique<model::Seq2SeqModel>(Vocabulary::build(descs), Vocabulary::build(codes), std::move(g),
                                                  c.model, c.seed);
  for (const auto& e : train) p.train.push_back(p.model->encode_example(e));
  for (const auto& e : valid) p.valid.push_back(p.model->encode_example(e));
  return p;
}

struct TrainOutcome {
  model::TrainResult result;
  std::string checkpoint;
};

/// Trains and returns the checkpoint bytes; also writes the checkpoint,
/// history and embedding table to their configured paths.
inline TrainOutcome cmd_train(const PipelineConfig& c, std::ostream* history_out = nullptr) {
  auto p = prepare(c);
  auto tc = c.train;
  tc.seed = c.seed;
  tc.max_len = c.decode.max_len;
  tc.reach_filter = c.decode.reach_filter;
  std::ostringstream history;
  auto result = model::train(*p.model, p.train, p.valid, tc, [&](const model::HistoryRecord& r) {
    const auto line = model::format_record(r) + "\n";
    history << line;
    if (history_out) *history_out << line;
  });
  TrainOutcome out{std::move(result), model::save_checkpoint(*p.model)};
  if (!c.paths.checkpoint.empty()) write_file(c.paths.checkpoint, out.checkpoint);
  if (!c.paths.history.empty()) write_file(c.paths.history, history.str());
  if (!c.paths.embeddings.empty()) {
    std::ostringstream emb;
    embed::dump_embeddings(p.model->graph(), model::node_table(*p.model), emb);
    write_file(c.paths.embeddings, emb.str());
  }
  return out;
}

inline std::unique_ptr<model::Seq2SeqModel> load_model(const PipelineConfig& c) {
  const auto bytes = read_file(c.paths.checkpoint, "checkpoint");
  return model::load_checkpoint(bytes);
}

/// Beam-search output for one description, as space-separated tokens.
inline std::string cmd_generate(const PipelineConfig& c, model::Seq2SeqModel& m, const std::string& description) {
  const auto tokens = ingest::tokenize_description(description);
  if (tokens.empty()) throw InvalidInput("empty description");
  const auto ids = m.description_vocab().encode(tokens);
  const auto out = model::generate(m, ids, c.decode.beam, c.decode.max_len, c.decode.reach_filter);
  std::string s;
  for (const auto& t : m.code_vocab().decode(out)) s += (s.empty() ? "" : " ") + t;
  return s;
}

/// Decodes every description with `workers` threads; the result order
/// follows the input order.
inline std::vector<std::vector<std::string>> generate_all(const PipelineConfig& c, model::Seq2SeqModel& m,
                                                          const std::vector<ingest::Example>& data) {
  const auto nodes = model::node_table(m);
  std::vector<std::vector<std::string>> out(data.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < data.size(); i += stride) {
      const auto ids = m.description_vocab().encode(data[i].description);
      if (ids.empty()) continue;
      out[i] = m.code_vocab().decode(model::generate(m, ids, nodes, c.decode.beam, c.decode.max_len, c.decode.reach_filter));
    }
  };
  const std::size_t workers = std::min(c.decode.workers, std::max<std::size_t>(1, data.size()));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline metrics::MetricReport score(const std::vector<ingest::Example>& data,
                                   const std::vector<std::vector<std::string>>& candidates) {
  std::vector<metrics::EvalPair> pairs;
  for (std::size_t i = 0; i < data.size(); ++i) pairs.push_back({candidates[i], {data[i].code}});
  return metrics::evaluate(pairs);
}

inline metrics::MetricReport cmd_evaluate(const PipelineConfig& c, model::Seq2SeqModel& m) {
  const auto test = load_dataset(c.paths.test, "test");
  if (test.empty()) throw InvalidInput("test set is empty");
  return score(test, generate_all(c, m, test));
}

inline metrics::MetricReport cmd_evaluate(const PipelineConfig& c) {
  const auto test = load_dataset(c.paths.test, "test");
  auto m = load_model(c);
  if (test.empty()) throw InvalidInput("test set is empty");
  return score(test, generate_all(c, *m, test));
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string axis;
  std::string label;
  metrics::MetricReport report;
};

inline std::string hop_label(int k) {
  static const char* const words[] = {"Zero", "One", "Two", "Three", "Four", "Five"};
  return (k >= 0 && k <= 5 ? std::string(words[k]) : std::to_string(k)) + "-hop size";
}

/// One configuration per axis value, labelled as in the ablation table.
inline std::vector<std::pair<std::string, PipelineConfig>> ablation_variants(const PipelineConfig& base,
                                                                             const std::string& axis,
                                                                             const std::vector<std::string>& values) {
  std::vector<std::pair<std::string, PipelineConfig>> out;
  auto flag = [&](const std::string& v) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("axis '" + axis + "': expected on/off, got '" + v + "'");
  };
  for (const auto& v : values) {
    PipelineConfig c = base;
    std::string label;
    if (axis == "direction") {
      c.model.embedder.use_edge_direction = flag(v);
      label = flag(v) ? "Directed edges" : "-- directed edges";
    } else if (axis == "labels") {
      c.model.embedder.use_edge_labels = flag(v);
      label = flag(v) ? "Labelled edges" : "-- labelled edges";
    } else if (axis == "hops") {
      try {
        c.model.embedder.hops = std::stoi(v);
      } catch (const std::exception&) {
        throw ConfigError("axis 'hops': expected an integer, got '" + v + "'");
      }
      if (c.model.embedder.hops < 1) throw ConfigError("axis 'hops': must be >= 1");
      label = hop_label(c.model.embedder.hops);
    } else if (axis == "aggregator") {
      try {
        c.model.embedder.aggregator = embed::parse_aggregator(v);
      } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
      }
      static const std::map<embed::Aggregator, std::string> names{{embed::Aggregator::Mean, "Mean aggregator"},
                                                                  {embed::Aggregator::Pooling, "Pooling aggregator"},
                                                                  {embed::Aggregator::Lstm, "LSTM aggregator"}};
      label = names.at(c.model.embedder.aggregator);
    } else {
      throw ConfigError("unknown ablation axis '" + axis + "' (expected direction, labels, hops or aggregator)");
    }
    c.paths.checkpoint.clear();
    c.paths.history.clear();
    c.paths.embeddings.clear();
    out.emplace_back(label, std::move(c));
  }
  return out;
}

/// Trains one model per axis value with the shared seed and evaluates each
/// on the test set.
inline std::vector<AblationRow> cmd_ablate(const PipelineConfig& base,
                                           const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  if (axes.empty()) throw ConfigError("ablate: no axes given");
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, PipelineConfig>>>> plan;
  for (const auto& [axis, values] : axes) {
    if (values.empty()) throw ConfigError("ablate: axis '" + axis + "' has no values");
    plan.emplace_back(axis, ablation_variants(base, axis, values));
  }
  const auto test = load_dataset(base.paths.test, "test");
  if (test.empty()) throw InvalidInput("test set is empty");
  std::vector<AblationRow> rows;
  for (const auto& [axis, variants] : plan) {
    for (const auto& [label, c] : variants) {
      auto p = prepare(c);
      auto tc = c.train;
      tc.seed = c.seed;
      tc.max_len = c.decode.max_len;
      tc.reach_filter = c.decode.reach_filter;
      model::train(*p.model, p.train, p.valid, tc);
      rows.push_back({axis, label, score(test, generate_all(c, *p.model, test))});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

struct SyntheticFiles {
  std::string signatures;
  std::string train;
  std::string valid;
  std::string test;
};

inline std::string dataset_text(std::span<const ingest::Example> data) {
  std::ostringstream out;
  ingest::write_dataset(std::vector<ingest::Example>(data.begin(), data.end()), out);
  return out.str();
}

/// Signature text plus train/valid/test splits of 80/10/10 (train keeps at
/// least one example). Writes signatures.txt, train.tsv, valid.tsv and
/// test.tsv under `dir` when it is non-empty.
inline SyntheticFiles cmd_gen_synthetic(const synthetic::SyntheticSpec& spec, const std::string& dir = {}) {
  const auto corpus = synthetic::generate(spec);
  const auto n = corpus.examples.size();
  const auto n_valid = n / 10, n_test = n / 10;
  const auto n_train = n - n_valid - n_test;
  std::span<const ingest::Example> all(corpus.examples);
  SyntheticFiles f{ingest::emit_signatures(corpus.signatures), dataset_text(all.subspan(0, n_train)),
                   dataset_text(all.subspan(n_train, n_valid)), dataset_text(all.subspan(n_train + n_valid))};
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_file((d / "signatures.txt").string(), f.signatures);
    write_file((d / "train.tsv").string(), f.train);
    write_file((d / "valid.tsv").string(), f.valid);
    write_file((d / "test.tsv").string(), f.test);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

enum ExitCode : int { kSuccess = 0, kUsage = 2, kData = 3, kDivergence = 4 };

/// Maps the library's exception types onto process exit codes.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const TrainingError*>(&e)) return kDivergence;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidInput*>(&e)) return kUsage;
  return kData;
}

}  // namespace adgs2s::pipeline
