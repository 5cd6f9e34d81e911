#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adgs2s/adg.hpp"
#include "adgs2s/autodiff.hpp"
#include "adgs2s/embedder.hpp"
#include "adgs2s/layers.hpp"
#include "adgs2s/random.hpp"
#include "adgs2s/signatures.hpp"
#include "adgs2s/vocabulary.hpp"

namespace adgs2s::model {

using nn::Matrix;
using nn::Mode;
using nn::Tape;
using nn::Var;
using nn::Vector;

struct ModelConfig {
  Eigen::Index word_dim = 100;
  /// Width of code-token embeddings and, by construction, of node
  /// embeddings (the embedder dimension is forced to match).
  Eigen::Index code_dim = 100;
  Eigen::Index hidden = 256;
  Eigen::Index mlp_hidden = 256;
  int window_layers = 1;
  int half_window = 1;
  double dropout = 0.1;
  embed::EmbedderConfig embedder{};

  void validate() const {
    if (word_dim < 1 || code_dim < 1 || hidden < 1 || mlp_hidden < 1)
      throw InvalidInput("model: dimensions must be positive");
    if (window_layers < 0 || half_window < 0) throw InvalidInput("model: window stack sizes must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidInput("model: dropout must lie in [0, 1)");
    embedder.validate();
  }
};

struct EncodedExample {
  std::vector<TokenId> description;
  std::vector<TokenId> code;
};

/// Rounds every entry to the nearest float, so a float32 checkpoint holds
/// the parameters exactly.
inline void snap_to_float(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

/// Encoder, embedder and attentive decoder, together with the vocabularies
/// and graph they were built against.
///
/// Parameters are addressed by stable names; `parameters()` returns them in
/// name order, which is also the checkpoint order. Instances are not
/// movable once an optimiser or tape holds pointers into them, so they live
/// behind `std::unique_ptr` in most call sites.
class Seq2SeqModel {
 public:
  Seq2SeqModel(Vocabulary description_vocab, Vocabulary code_vocab, graph::Adg graph, ModelConfig config,
               std::uint64_t seed)
      : desc_vocab_(std::move(description_vocab)),
        code_vocab_(std::move(code_vocab)),
        graph_(std::move(graph)),
        config_(std::move(config)),
        api_(ingest::link_api_tokens(code_vocab_, graph_)) {
    config_.embedder.dim = config_.code_dim;
    config_.validate();
    Rng rng(seed);
    const auto H = config_.hidden;
    const auto Vd = static_cast<Eigen::Index>(desc_vocab_.size());
    const auto R = static_cast<Eigen::Index>(code_vocab_.size());
    desc_lut = nn::Parameter("encoder.lut", nn::glorot_init(Vd, config_.word_dim, rng));
    window = nn::WindowStack("encoder.window", config_.word_dim, config_.window_layers, config_.half_window, rng);
    encoder = nn::LstmParams("encoder.lstm", config_.word_dim, H, rng);
    code_lut = nn::Parameter("decoder.lut", nn::glorot_init(R, config_.code_dim, rng));
    decoder = nn::LstmParams("decoder.lstm", config_.code_dim + H, H, rng);
    attention_w = nn::Parameter("decoder.attention", nn::glorot_init(H, H, rng));
    out1_w = nn::Parameter("decoder.out1.weight", nn::glorot_init(config_.mlp_hidden, 2 * H, rng));
    out1_b = nn::Parameter("decoder.out1.bias", Matrix::Zero(config_.mlp_hidden, 1));
    out2_w = nn::Parameter("decoder.out2.weight", nn::glorot_init(R, config_.mlp_hidden, rng));
    out2_b = nn::Parameter("decoder.out2.bias", Matrix::Zero(R, 1));
    embedder = embed::EmbedderParams(graph_.node_count(), config_.embedder, rng);
    for (auto* p : parameters()) snap_to_float(p->value);
  }

  Seq2SeqModel(const Seq2SeqModel&) = delete;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;

  const Vocabulary& description_vocab() const noexcept { return desc_vocab_; }
  const Vocabulary& code_vocab() const noexcept { return code_vocab_; }
  const graph::Adg& graph() const noexcept { return graph_; }
  const ModelConfig& config() const noexcept { return config_; }
  const ingest::ApiTokenIndex& api_index() const noexcept { return api_; }

  /// Replaces the token-to-node links; used to probe the query switch.
  void set_api_index(ingest::ApiTokenIndex index) {
    if (index.vocabulary_size() != code_vocab_.size()) throw InvalidInput("api index does not match the vocabulary");
    api_ = std::move(index);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out{&desc_lut, &code_lut, &attention_w, &out1_w, &out1_b, &out2_w, &out2_b};
    for (auto* p : window.parameters()) out.push_back(p);
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : embedder.parameters()) out.push_back(p);
    std::sort(out.begin(), out.end(), [](const nn::Parameter* a, const nn::Parameter* b) { return a->name < b->name; });
    return out;
  }

  nn::Parameter* find_parameter(std::string_view name) {
    for (auto* p : parameters())
      if (p->name == name) return p;
    return nullptr;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  EncodedExample encode_example(const ingest::Example& e) const {
    return {desc_vocab_.encode(e.description), code_vocab_.encode(e.code)};
  }

  nn::Parameter desc_lut;
  nn::WindowStack window;
  nn::LstmParams encoder;
  nn::Parameter code_lut;
  nn::LstmParams decoder;
  nn::Parameter attention_w;
  nn::Parameter out1_w, out1_b;
  nn::Parameter out2_w, out2_b;
  embed::EmbedderParams embedder;

 private:
  Vocabulary desc_vocab_;
  Vocabulary code_vocab_;
  graph::Adg graph_;
  ModelConfig config_;
  ingest::ApiTokenIndex api_;
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct EncoderOutput {
  Var states;  // hidden × T
  std::vector<Var> hidden_states;
  Var h;
  Var c;
};

inline EncoderOutput encode(Tape& tape, Seq2SeqModel& m, std::span<const TokenId> description,
                            Mode mode = Mode::Eval, Rng* rng = nullptr) {
  if (description.empty()) throw InvalidInput("encode: empty description");
  std::vector<Var> embedded;
  embedded.reserve(description.size());
  const auto V = static_cast<TokenId>(m.description_vocab().size());
  for (TokenId id : description) embedded.push_back(tape.row(m.desc_lut, id >= 0 && id < V ? id : Vocabulary::kUnk));
  auto features = nn::window_relu_stack(m.window, std::move(embedded));
  const auto H = m.config().hidden;
  Var h = tape.constant(Matrix::Zero(H, 1));
  Var c = tape.constant(Matrix::Zero(H, 1));
  EncoderOutput out;
  for (Var x : features) {
    if (mode == Mode::Train && m.config().dropout > 0.0) x = nn::dropout(x, m.config().dropout, mode, *rng);
    auto step = nn::lstm_cell(m.encoder, x, h, c);
    h = step.h;
    c = step.c;
    out.hidden_states.push_back(h);
  }
  out.states = nn::hstack(out.hidden_states);
  out.h = h;
  out.c = c;
  return out;
}

// ---------------------------------------------------------------------------
// Query switching
// ---------------------------------------------------------------------------

/// Node embeddings as seen by the decoder: tape variables from a training
/// pass, a fixed table computed once for inference, or both.
struct NodeEmbeddings {
  std::vector<Var> vars;
  const Matrix* table = nullptr;

  Var at(Tape& tape, graph::NodeId n) const {
    if (n < vars.size() && vars[n].valid()) return vars[n];
    if (table != nullptr && static_cast<Eigen::Index>(n) < table->rows()) return tape.constant(table->row(n).transpose());
    throw InvalidInput("no embedding available for node " + std::to_string(n));
  }
};

/// z_m of the linked node when `prev` names an API method, otherwise the
/// code lookup row of `prev`.
inline Var decoder_query(Tape& tape, Seq2SeqModel& m, TokenId prev, const NodeEmbeddings& nodes) {
  const auto R = static_cast<TokenId>(m.code_vocab().size());
  if (prev < 0 || prev >= R) prev = Vocabulary::kUnk;
  if (auto node = m.api_index().node(prev)) return nodes.at(tape, *node);
  return tape.row(m.code_lut, prev);
}

// ---------------------------------------------------------------------------
// Decoder step
// ---------------------------------------------------------------------------

struct DecoderState {
  Var h;
  Var c;
};

struct StepOutput {
  Var logits;
  DecoderState state;
  Var attention;
};

/// Attention on the previous state gives the context; the LSTM consumes
/// [query; context]; a tanh perceptron over [s_t; context] gives logits.
inline StepOutput decode_step(Tape& tape, Seq2SeqModel& m, Var query, DecoderState state, Var states) {
  const auto H = m.config().hidden;
  if (query.rows() != m.config().code_dim || query.cols() != 1)
    throw ShapeError("decode_step: query must be " + std::to_string(m.config().code_dim) + "x1, got " +
                     std::to_string(query.rows()) + "x" + std::to_string(query.cols()));
  if (state.h.rows() != H || state.c.rows() != H || states.rows() != H)
    throw ShapeError("decode_step: state width differs from the hidden size " + std::to_string(H));
  auto att = nn::attention(states, state.h, tape.param(m.attention_w));
  auto next = nn::lstm_cell(m.decoder, nn::concat({query, att.context}), state.h, state.c);
  Var hidden = nn::tanh(nn::add(nn::matmul(tape.param(m.out1_w), nn::concat({next.h, att.context})), tape.param(m.out1_b)));
  Var logits = nn::add(nn::matmul(tape.param(m.out2_w), hidden), tape.param(m.out2_b));
  return {logits, {next.h, next.c}, att.weights};
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Nodes linked to any token of the given code sequences.
inline std::vector<graph::NodeId> referenced_nodes(const Seq2SeqModel& m, std::span<const EncodedExample> batch) {
  std::set<graph::NodeId> nodes;
  for (const auto& ex : batch)
    for (TokenId t : ex.code)
      if (auto n = m.api_index().node(t)) nodes.insert(*n);
  return {nodes.begin(), nodes.end()};
}

/// Mean cross-entropy of the code followed by EOS. With teacher forcing the
/// gold previous token is the query; otherwise the model's own argmax is.
inline Var sequence_loss(Tape& tape, Seq2SeqModel& m, const EncodedExample& ex, const NodeEmbeddings& nodes,
                         Mode mode = Mode::Eval, Rng* rng = nullptr, bool teacher_forcing = true) {
  auto enc = encode(tape, m, ex.description, mode, rng);
  DecoderState state{enc.h, enc.c};
  std::vector<TokenId> targets(ex.code.begin(), ex.code.end());
  targets.push_back(Vocabulary::kEos);
  std::vector<Var> losses;
  losses.reserve(targets.size());
  TokenId prev = Vocabulary::kBos;
  for (TokenId target : targets) {
    Var q = decoder_query(tape, m, prev, nodes);
    if (mode == Mode::Train && m.config().dropout > 0.0) q = nn::dropout(q, m.config().dropout, mode, *rng);
    auto step = decode_step(tape, m, q, state, enc.states);
    losses.push_back(nn::softmax_cross_entropy(step.logits, target));
    state = step.state;
    if (teacher_forcing) {
      prev = target;
    } else {
      Eigen::Index arg = 0;
      step.logits.value().col(0).maxCoeff(&arg);
      prev = static_cast<TokenId>(arg);
    }
  }
  return nn::scale(nn::sum(losses), 1.0 / static_cast<double>(losses.size()));
}

/// Batch loss with node embeddings recomputed on the tape for the nodes the
/// batch references, so gradients reach the embedder.
inline Var batch_loss(Tape& tape, Seq2SeqModel& m, std::span<const EncodedExample> batch, Mode mode = Mode::Eval,
                      Rng* rng = nullptr, bool teacher_forcing = true) {
  if (batch.empty()) throw InvalidInput("batch_loss: empty batch");
  const auto targets = referenced_nodes(m, batch);
  NodeEmbeddings nodes;
  if (!targets.empty()) nodes.vars = embed::embed_nodes(tape, m.graph(), m.embedder, m.config().embedder, targets);
  std::vector<Var> losses;
  for (const auto& ex : batch) losses.push_back(sequence_loss(tape, m, ex, nodes, mode, rng, teacher_forcing));
  return nn::scale(nn::sum(losses), 1.0 / static_cast<double>(losses.size()));
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Step-by-step log-probabilities for one description, with node embeddings
/// and encoder states computed once. With the reach filter on, API tokens
/// whose node is not reachable from the types produced so far (plus the
/// initial types) are masked out before renormalising.
class Stepper {
 public:
  struct State {
    Vector h;
    Vector c;
    std::shared_ptr<const graph::ReachabilityTracker> reach;
  };

  Stepper(Seq2SeqModel& m, std::span<const TokenId> description, const Matrix& node_table, bool reach_filter = false,
          std::span<const graph::TypeId> initial_types = {})
      : model_(&m), table_(&node_table), reach_filter_(reach_filter) {
    Tape tape(false);
    auto enc = encode(tape, m, description);
    states_ = enc.states.value();
    h0_ = enc.h.value();
    c0_ = enc.c.value();
    if (reach_filter_) {
      auto tracker = std::make_shared<graph::ReachabilityTracker>(m.graph());
      for (auto t : initial_types) tracker->provide(t);
      reach0_ = std::move(tracker);
    }
  }

  State initial() const { return {h0_, c0_, reach0_}; }

  TokenId bos() const noexcept { return Vocabulary::kBos; }
  TokenId eos() const noexcept { return Vocabulary::kEos; }

  std::pair<Vector, State> step(const State& s, TokenId prev) const {
    Tape tape(false);
    NodeEmbeddings nodes{{}, table_};
    Var q = decoder_query(tape, *model_, prev, nodes);
    auto out = decode_step(tape, *model_, q, {tape.constant(s.h), tape.constant(s.c)}, tape.constant(states_));
    State next{out.state.h.value(), out.state.c.value(), s.reach};
    Vector logits = out.logits.value().col(0);
    if (reach_filter_) {
      if (auto node = model_->api_index().node(prev)) {
        auto tracker = std::make_shared<graph::ReachabilityTracker>(*s.reach);
        for (auto t : model_->graph().node(*node).provided) tracker->provide(t);
        next.reach = std::move(tracker);
      }
      for (const auto& [tok, node] : model_->api_index().entries())
        if (!next.reach->reachable(node)) logits(tok) = -std::numeric_limits<double>::infinity();
    }
    return {nn::log_softmax_values(logits), std::move(next)};
  }

  /// The tracker state after `prev` is consumed; exposes what the filter
  /// saw for external verification.
  const graph::ReachabilityTracker* reach(const State& s) const { return s.reach.get(); }

 private:
  Seq2SeqModel* model_;
  const Matrix* table_;
  bool reach_filter_;
  Matrix states_;
  Vector h0_, c0_;
  std::shared_ptr<const graph::ReachabilityTracker> reach0_;
};

/// Node embeddings for every graph node under the current parameters.
inline Matrix node_table(Seq2SeqModel& m) {
  if (m.graph().node_count() == 0) return Matrix(0, m.config().code_dim);
  return embed::embed_all(m.graph(), m.embedder, m.config().embedder);
}

}  // namespace adgs2s::model
