#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <iomanip>
#include <span>
#include <string>
#include <vector>

#include "adgs2s/adg.hpp"
#include "adgs2s/autodiff.hpp"
#include "adgs2s/layers.hpp"

namespace adgs2s::embed {

using graph::NodeId;
using nn::Matrix;
using nn::Var;

enum class Aggregator { Mean, Pooling, Lstm };
enum class Virtualization { Mean, Concat };
enum class Activation { Tanh, Relu };

struct EmbedderConfig {
  int hops = 2;
  Aggregator aggregator = Aggregator::Lstm;
  Virtualization virtualization = Virtualization::Mean;
  /// Group size cap for concat virtualization; larger groups keep their
  /// first `concat_cap` members in id order.
  std::size_t concat_cap = 4;
  bool use_edge_direction = true;
  bool use_edge_labels = true;
  Eigen::Index dim = 100;
  Activation activation = Activation::Tanh;

  void validate() const {
    if (hops < 1) throw InvalidInput("embedder: hops must be >= 1");
    if (dim < 1) throw InvalidInput("embedder: dimension must be >= 1");
    if (virtualization == Virtualization::Concat && concat_cap < 1)
      throw InvalidInput("embedder: concat virtualization needs a positive group-size cap");
  }

  /// Width of one ordered-set element.
  Eigen::Index element_width() const {
    return virtualization == Virtualization::Concat ? dim * static_cast<Eigen::Index>(concat_cap) : dim;
  }

  /// Width of the aggregated vector fed to W^k.
  Eigen::Index aggregate_width() const { return aggregator == Aggregator::Lstm ? dim : element_width(); }
};

inline const char* to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Mean: return "mean";
    case Aggregator::Pooling: return "pooling";
    case Aggregator::Lstm: return "lstm";
  }
  return "?";
}

inline const char* to_string(Virtualization v) { return v == Virtualization::Mean ? "mean" : "concat"; }
inline const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

inline Aggregator parse_aggregator(std::string_view s) {
  if (s == "mean") return Aggregator::Mean;
  if (s == "pooling" || s == "max") return Aggregator::Pooling;
  if (s == "lstm") return Aggregator::Lstm;
  throw InvalidInput("unknown aggregator '" + std::string(s) + "'");
}

inline Virtualization parse_virtualization(std::string_view s) {
  if (s == "mean") return Virtualization::Mean;
  if (s == "concat") return Virtualization::Concat;
  throw InvalidInput("unknown virtualization '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw InvalidInput("unknown activation '" + std::string(s) + "'");
}

/// Base features x_m (one learned row per node), one W^k per hop, and one
/// aggregator LSTM per hop when the aggregator is an LSTM.
struct EmbedderParams {
  nn::Parameter base;
  std::vector<nn::Parameter> hop_weights;
  std::vector<nn::LstmParams> aggregators;

  EmbedderParams() = default;
  EmbedderParams(std::size_t node_count, const EmbedderConfig& config, Rng& rng) {
    config.validate();
    const auto n = static_cast<Eigen::Index>(std::max<std::size_t>(node_count, 1));
    base = nn::Parameter("embedder.base", nn::glorot_init(n, config.dim, rng));
    for (int k = 1; k <= config.hops; ++k) {
      hop_weights.emplace_back("embedder.hop" + std::to_string(k) + ".weight",
                               nn::glorot_init(config.dim, config.aggregate_width(), rng));
      if (config.aggregator == Aggregator::Lstm)
        aggregators.emplace_back("embedder.hop" + std::to_string(k) + ".lstm", config.element_width(), config.dim, rng);
    }
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out{&base};
    for (auto& w : hop_weights) out.push_back(&w);
    for (auto& a : aggregators)
      for (auto* p : a.parameters()) out.push_back(p);
    return out;
  }

  void check(std::size_t node_count, const EmbedderConfig& config) const {
    if (base.value.rows() < static_cast<Eigen::Index>(node_count) || base.value.cols() != config.dim)
      throw ShapeError("embedder: base feature table does not match graph/dimension");
    if (hop_weights.size() != static_cast<std::size_t>(config.hops))
      throw ShapeError("embedder: expected one weight matrix per hop");
    for (const auto& w : hop_weights)
      if (w.value.rows() != config.dim || w.value.cols() != config.aggregate_width())
        throw ShapeError("embedder: hop weight has the wrong shape");
    if (config.aggregator == Aggregator::Lstm) {
      if (aggregators.size() != hop_weights.size()) throw ShapeError("embedder: missing aggregator LSTM parameters");
      for (const auto& a : aggregators)
        if (a.input_dim != config.element_width() || a.hidden_dim != config.dim)
          throw ShapeError("embedder: aggregator LSTM has the wrong shape");
    }
  }
};

/// The neighbour groups of m, in ordered-set order (self excluded): forward
/// groups then backward groups, each side by ascending tag. Unlabelled
/// collapses each side to one group; undirected merges the sides per tag.
inline std::vector<std::vector<NodeId>> neighbour_groups(const graph::Adg& adg, NodeId m, const EmbedderConfig& config) {
  const auto fwd = adg.neighbors_forward(m);
  const auto bwd = adg.neighbors_backward(m);
  std::vector<std::vector<NodeId>> groups;

  auto merged = [](std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  auto flatten = [](std::span<const graph::TagGroup> side, std::vector<NodeId>& into) {
    for (const auto& g : side) into.insert(into.end(), g.members.begin(), g.members.end());
  };

  if (config.use_edge_direction && config.use_edge_labels) {
    for (const auto& g : fwd) groups.push_back(g.members);
    for (const auto& g : bwd) groups.push_back(g.members);
  } else if (config.use_edge_direction) {
    std::vector<NodeId> f, b;
    flatten(fwd, f);
    flatten(bwd, b);
    if (!f.empty()) groups.push_back(merged(std::move(f)));
    if (!b.empty()) groups.push_back(merged(std::move(b)));
  } else if (config.use_edge_labels) {
    std::size_t i = 0, j = 0;
    while (i < fwd.size() || j < bwd.size()) {
      std::vector<NodeId> g;
      if (j == bwd.size() || (i < fwd.size() && fwd[i].tag < bwd[j].tag)) {
        g = fwd[i++].members;
      } else if (i == fwd.size() || bwd[j].tag < fwd[i].tag) {
        g = bwd[j++].members;
      } else {
        g = fwd[i++].members;
        g.insert(g.end(), bwd[j].members.begin(), bwd[j].members.end());
        ++j;
      }
      groups.push_back(merged(std::move(g)));
    }
  } else {
    std::vector<NodeId> all;
    flatten(fwd, all);
    flatten(bwd, all);
    if (!all.empty()) groups.push_back(merged(std::move(all)));
  }
  return groups;
}

/// Collapses a group of same-tag neighbours into one virtual feature.
/// Members are taken in the given (canonical id) order.
inline Var virtualize_group(std::span<const Var> members, Virtualization kind, std::size_t cap = 0) {
  if (members.empty()) throw InvalidInput("virtualize_group: empty group");
  if (kind == Virtualization::Mean) return nn::mean(members);
  if (cap == 0) throw InvalidInput("virtualize_group: concat needs a group-size cap");
  const Eigen::Index d = members[0].rows();
  const std::size_t n = std::min(cap, members.size());
  Var joined = nn::concat(members.first(n));
  return nn::pad_rows(joined, d * static_cast<Eigen::Index>(cap));
}

/// [h_m] ++ virtualized neighbour groups, all of width element_width().
inline std::vector<Var> build_ordered_set(const graph::Adg& adg, NodeId m, std::span<const Var> previous,
                                          const EmbedderConfig& config) {
  const Eigen::Index width = config.element_width();
  auto at = [&](NodeId n) {
    if (n >= previous.size() || !previous[n].valid())
      throw InvalidInput("build_ordered_set: no hop embedding for node " + std::to_string(n));
    return previous[n];
  };
  std::vector<Var> seq{nn::pad_rows(at(m), width)};
  std::vector<Var> members;
  for (const auto& group : neighbour_groups(adg, m, config)) {
    members.clear();
    for (NodeId n : group) members.push_back(at(n));
    seq.push_back(virtualize_group(members, config.virtualization, config.concat_cap));
  }
  return seq;
}

/// Reduces the ordered set to one vector.
inline Var aggregate(std::span<const Var> sequence, Aggregator kind, nn::LstmParams* lstm = nullptr) {
  if (sequence.empty()) throw InvalidInput("aggregate: empty ordered set");
  switch (kind) {
    case Aggregator::Mean:
      return nn::mean(sequence);
    case Aggregator::Pooling:
      return nn::max_pool(sequence);
    case Aggregator::Lstm: {
      if (lstm == nullptr) throw InvalidInput("aggregate: LSTM aggregator without parameters");
      nn::Tape& t = *sequence[0].tape();
      Var h = t.constant(Matrix::Zero(lstm->hidden_dim, 1));
      Var c = h;
      for (Var x : sequence) {
        auto out = nn::lstm_cell(*lstm, x, h, c);
        h = out.h;
        c = out.c;
      }
      return h;
    }
  }
  throw InvalidInput("aggregate: unknown aggregator");
}

/// Hop-K embeddings for `targets`, computing each hop only on the part of
/// the graph the targets can see. Result is indexed by node id; entries
/// outside `targets` may be empty. All hops update synchronously.
inline std::vector<Var> embed_nodes(nn::Tape& tape, const graph::Adg& adg, EmbedderParams& params,
                                    const EmbedderConfig& config, std::span<const NodeId> targets) {
  config.validate();
  params.check(adg.node_count(), config);
  const std::size_t n = adg.node_count();
  const auto K = static_cast<std::size_t>(config.hops);

  // needed[k]: nodes whose hop-k embedding is required.
  std::vector<std::vector<char>> needed(K + 1, std::vector<char>(n, 0));
  for (NodeId t : targets) {
    if (t >= n) throw InvalidInput("embed_nodes: unknown node " + std::to_string(t));
    needed[K][t] = 1;
  }
  for (std::size_t k = K; k > 0; --k) {
    for (NodeId m = 0; m < n; ++m) {
      if (!needed[k][m]) continue;
      needed[k - 1][m] = 1;
      for (const auto& g : adg.neighbors_forward(m))
        for (NodeId u : g.members) needed[k - 1][u] = 1;
      for (const auto& g : adg.neighbors_backward(m))
        for (NodeId u : g.members) needed[k - 1][u] = 1;
    }
  }

  std::vector<Var> h(n);
  for (NodeId m = 0; m < n; ++m)
    if (needed[0][m]) h[m] = tape.row(params.base, m);

  for (std::size_t k = 1; k <= K; ++k) {
    std::vector<Var> next(n);
    Var w = tape.param(params.hop_weights[k - 1]);
    nn::LstmParams* lstm = config.aggregator == Aggregator::Lstm ? &params.aggregators[k - 1] : nullptr;
    for (NodeId m = 0; m < n; ++m) {
      if (!needed[k][m]) continue;
      const auto seq = build_ordered_set(adg, m, h, config);
      Var pre = nn::matmul(w, aggregate(seq, config.aggregator, lstm));
      next[m] = config.activation == Activation::Tanh ? nn::tanh(pre) : nn::relu(pre);
    }
    h = std::move(next);
  }
  return h;
}

/// z_m for every node, as rows of an N×d matrix.
inline Matrix embed_all(const graph::Adg& adg, EmbedderParams& params, const EmbedderConfig& config) {
  nn::Tape tape(false);
  std::vector<NodeId> all(adg.node_count());
  for (NodeId i = 0; i < all.size(); ++i) all[i] = i;
  const auto z = embed_nodes(tape, adg, params, config, all);
  Matrix out(static_cast<Eigen::Index>(adg.node_count()), config.dim);
  for (NodeId i = 0; i < all.size(); ++i) out.row(i) = z[i].value().transpose();
  return out;
}

// ---------------------------------------------------------------------------
// ADG-EMB-v1 table:
//
//   ADG-EMB-v1
//   nodes <N> dim <d>
//   <id> <name> <v_1> ... <v_d>      (N lines, ascending id, %.17g)
//   end
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEmbeddingHeader = "ADG-EMB-v1";

inline void dump_embeddings(const graph::Adg& adg, const Matrix& z, std::ostream& out) {
  if (z.rows() != static_cast<Eigen::Index>(adg.node_count())) throw ShapeError("embedding table row count");
  out << kEmbeddingHeader << '\n' << "nodes " << z.rows() << " dim " << z.cols() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out << i << ' ' << adg.nodes()[static_cast<std::size_t>(i)].name;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", z(i, j));
      out << ' ' << buf;
    }
    out << '\n';
  }
  out << "end\n";
}

inline Matrix load_embeddings(std::istream& in) {
  std::string line, word, dimword;
  if (!std::getline(in, line) || line != kEmbeddingHeader) throw FormatError("embedding table: missing header");
  Eigen::Index n = 0, d = 0;
  if (!std::getline(in, line)) throw FormatError("embedding table: truncated");
  std::istringstream hs(line);
  if (!(hs >> word >> n >> dimword >> d) || word != "nodes" || dimword != "dim" || n < 0 || d < 0)
    throw FormatError("embedding table: bad size line");
  Matrix z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("embedding table: truncated");
    std::istringstream ls(line);
    Eigen::Index id = -1;
    std::string name;
    if (!(ls >> id >> name) || id != i) throw FormatError("embedding table: bad row " + std::to_string(i));
    for (Eigen::Index j = 0; j < d; ++j)
      if (!(ls >> z(i, j))) throw FormatError("embedding table: short row " + std::to_string(i));
  }
  if (!std::getline(in, line) || line != "end") throw FormatError("embedding table: missing end marker");
  return z;
}

}  // namespace adgs2s::embed
