#pragma once

// Line-by-line transcription of the neighbourhood embedding over raw edge
// lists and plain Eigen values, for checking adgs2s::embed.

#include <map>
#include <set>
#include <vector>

#include "adgs2s/embedder.hpp"
#include "test_support.hpp"

namespace adgs2s::testing {

using embed::Activation;
using embed::Aggregator;
using embed::EmbedderConfig;
using embed::EmbedderParams;
using embed::Virtualization;
using graph::NodeId;
using nn::Matrix;
using nn::Vector;

inline graph::Adg build(const RandomCorpus& c) {
  return graph::Adg::build(c.methods, graph::TypeHierarchy(c.types));
}

/// Neighbour groups recomputed from the raw edge list.
inline std::vector<std::vector<NodeId>> oracle_groups(const graph::Adg& g, NodeId m, bool directed, bool labelled) {
  // key: (side, tag); side 0 = providers of m, 1 = consumers of m.
  std::map<std::pair<int, std::uint32_t>, std::set<NodeId>> by_key;
  for (const auto& e : g.edges()) {
    if (e.tail == m) by_key[{0, e.tag}].insert(e.head);
    if (e.head == m) by_key[{1, e.tag}].insert(e.tail);
  }
  std::map<std::pair<int, std::uint32_t>, std::set<NodeId>> merged;
  for (const auto& [key, members] : by_key) {
    const int side = directed ? key.first : 0;
    const std::uint32_t tag = labelled ? key.second : 0;
    merged[{side, tag}].insert(members.begin(), members.end());
  }
  std::vector<std::vector<NodeId>> out;
  for (const auto& [key, members] : merged) out.emplace_back(members.begin(), members.end());
  return out;
}

inline Vector oracle_lstm_aggregate(const nn::LstmParams& p, const std::vector<Vector>& seq) {
  const Eigen::Index H = p.hidden_dim;
  Vector h = Vector::Zero(H), c = Vector::Zero(H);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (const auto& x : seq) {
    Vector in(H + x.size());
    in << h, x;
    Vector z = p.weight.value * in + p.bias.value.col(0);
    Vector i = z.segment(0, H).unaryExpr(sig), f = z.segment(H, H).unaryExpr(sig);
    Vector o = z.segment(2 * H, H).unaryExpr(sig), cand = z.segment(3 * H, H).array().tanh().matrix();
    c = (f.array() * c.array() + i.array() * cand.array()).matrix();
    h = (o.array() * c.array().tanh()).matrix();
  }
  return h;
}

/// Straight transcription of the K-hop neighbourhood embedding over all
/// nodes, using plain Eigen values.
inline Matrix oracle_embed(const graph::Adg& g, const EmbedderParams& p, const EmbedderConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  const Eigen::Index d = cfg.dim, width = cfg.element_width();
  std::vector<Vector> h(static_cast<std::size_t>(n));
  for (Eigen::Index m = 0; m < n; ++m) h[m] = p.base.value.row(m).transpose();
  for (int k = 0; k < cfg.hops; ++k) {
    std::vector<Vector> next(h.size());
    for (NodeId m = 0; m < n; ++m) {
      std::vector<Vector> seq;
      Vector self = Vector::Zero(width);
      self.head(d) = h[m];
      seq.push_back(self);
      for (const auto& group : oracle_groups(g, m, cfg.use_edge_direction, cfg.use_edge_labels)) {
        Vector v = Vector::Zero(width);
        if (cfg.virtualization == Virtualization::Mean) {
          for (NodeId u : group) v += h[u];
          v /= static_cast<double>(group.size());
        } else {
          for (std::size_t i = 0; i < std::min(group.size(), cfg.concat_cap); ++i)
            v.segment(static_cast<Eigen::Index>(i) * d, d) = h[group[i]];
        }
        seq.push_back(v);
      }
      Vector agg;
      if (cfg.aggregator == Aggregator::Mean) {
        agg = Vector::Zero(width);
        for (const auto& s : seq) agg += s;
        agg /= static_cast<double>(seq.size());
      } else if (cfg.aggregator == Aggregator::Pooling) {
        agg = seq[0];
        for (const auto& s : seq) agg = agg.cwiseMax(s);
      } else {
        agg = oracle_lstm_aggregate(p.aggregators[static_cast<std::size_t>(k)], seq);
      }
      Vector pre = p.hop_weights[static_cast<std::size_t>(k)].value * agg;
      next[m] = cfg.activation == Activation::Tanh ? Vector(pre.array().tanh()) : Vector(pre.cwiseMax(0.0));
    }
    h = std::move(next);
  }
  Matrix out(n, d);
  for (Eigen::Index m = 0; m < n; ++m) out.row(m) = h[m].transpose();
  return out;
}

}  // namespace adgs2s::testing
