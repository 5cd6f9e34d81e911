#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "adgs2s/error.hpp"
#include "adgs2s/type_hierarchy.hpp"

namespace adgs2s::graph {

using NodeId = std::uint32_t;

/// A method signature as it comes out of a corpus, before id assignment.
struct ApiMethod {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  friend bool operator==(const ApiMethod&, const ApiMethod&) = default;
};

/// One row of the nodes table. `inputs`/`outputs` keep the declared
/// multiset; `required`/`provided` are the distinct type ids, ascending.
struct ApiMethodNode {
  NodeId id = 0;
  std::string name;
  std::vector<TypeId> inputs;
  std::vector<TypeId> outputs;
  std::vector<TypeId> required;
  std::vector<TypeId> provided;

  /// Initial value of the reachability counter.
  std::size_t dependent_parameters() const noexcept { return required.size(); }
};

struct TaggedEdge {
  NodeId head = 0;
  TypeId tag = 0;
  NodeId tail = 0;

  friend auto operator<=>(const TaggedEdge&, const TaggedEdge&) = default;
};

/// Neighbours sharing one edge tag.
struct TagGroup {
  TypeId tag = 0;
  std::vector<NodeId> members;  // ascending

  friend bool operator==(const TagGroup&, const TagGroup&) = default;
};

struct DegreeStats {
  std::size_t indegree = 0;
  std::size_t intagdegree = 0;
  std::size_t outdegree = 0;
  std::size_t outtagdegree = 0;
  std::vector<TypeId> in_tags;   // IN_i
  std::vector<TypeId> out_tags;  // OUT_i
};

enum class Dependency { None, Partial, Full };

struct BuildOptions {
  /// Construction refuses inputs whose projected edge count exceeds this.
  std::size_t max_edges = 50'000'000;
};

/// Full/partial/no dependency of `b` on `a`, judged over distinct types.
inline Dependency classify_dependency(const ApiMethod& a, const ApiMethod& b,
                                      const TypeHierarchy& hierarchy) {
  std::vector<TypeId> outs;
  for (const auto& o : a.outputs) outs.push_back(hierarchy.id(o));
  std::vector<TypeId> ins;
  for (const auto& i : b.inputs) ins.push_back(hierarchy.id(i));
  std::sort(ins.begin(), ins.end());
  ins.erase(std::unique(ins.begin(), ins.end()), ins.end());

  std::size_t matched = 0;
  for (TypeId r : ins) {
    if (std::any_of(outs.begin(), outs.end(), [&](TypeId o) { return hierarchy.matches(o, r); }))
      ++matched;
  }
  if (matched == 0) return Dependency::None;
  return matched == ins.size() ? Dependency::Full : Dependency::Partial;
}

/// Immutable API dependency graph.
///
/// Edge (i, tag, j) exists when some output of i matches the required input
/// type `tag` of j and i != j. Edges are kept sorted by (head, tag, tail).
class Adg {
 public:
  Adg() = default;

  static Adg build(std::vector<ApiMethod> methods, TypeHierarchy hierarchy, BuildOptions options = {}) {
    Adg g;
    g.hierarchy_ = std::move(hierarchy);
    const auto& h = g.hierarchy_;

    g.nodes_.reserve(methods.size());
    for (std::size_t i = 0; i < methods.size(); ++i) {
      auto& m = methods[i];
      if (m.name.empty()) throw ConstructionError("method name must be non-empty");
      if (!g.by_name_.emplace(m.name, static_cast<NodeId>(i)).second)
        throw ConstructionError("duplicate method name '" + m.name + "'");
      ApiMethodNode node;
      node.id = static_cast<NodeId>(i);
      node.name = std::move(m.name);
      auto resolve = [&](const std::string& t) {
        auto id = h.find(t);
        if (!id) throw ConstructionError("method '" + node.name + "' uses undeclared type '" + t + "'");
        return *id;
      };
      for (const auto& t : m.inputs) node.inputs.push_back(resolve(t));
      for (const auto& t : m.outputs) node.outputs.push_back(resolve(t));
      node.required = distinct(node.inputs);
      node.provided = distinct(node.outputs);
      g.nodes_.push_back(std::move(node));
    }

    // Inverted index: a value of type t can feed every node requiring t or a
    // supertype of t.
    g.iit_.assign(h.size(), {});
    for (const auto& node : g.nodes_) {
      for (TypeId r : node.required) {
        for (TypeId t : h.descendants(r)) {
          auto& bucket = g.iit_[t];
          if (bucket.empty() || bucket.back() != node.id) bucket.push_back(node.id);
        }
      }
    }

    std::size_t projected = 0;
    for (const auto& node : g.nodes_) {
      for (TypeId o : node.provided) {
        for (NodeId j : g.iit_[o]) {
          if (j == node.id) continue;
          for (TypeId r : g.nodes_[j].required) projected += h.matches(o, r) ? 1 : 0;
        }
      }
      if (projected > options.max_edges)
        throw ConstructionError("projected edge count exceeds cap of " + std::to_string(options.max_edges));
    }
    g.edges_.reserve(projected);

    std::vector<TaggedEdge> local;
    for (const auto& node : g.nodes_) {
      local.clear();
      for (TypeId o : node.provided) {
        for (NodeId j : g.iit_[o]) {
          if (j == node.id) continue;
          for (TypeId r : g.nodes_[j].required)
            if (h.matches(o, r)) local.push_back({node.id, r, j});
        }
      }
      std::sort(local.begin(), local.end());
      local.erase(std::unique(local.begin(), local.end()), local.end());
      g.edges_.insert(g.edges_.end(), local.begin(), local.end());
    }

    g.index_neighbourhoods();
    return g;
  }

  const TypeHierarchy& hierarchy() const noexcept { return hierarchy_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::span<const ApiMethodNode> nodes() const noexcept { return nodes_; }
  std::span<const TaggedEdge> edges() const noexcept { return edges_; }

  const ApiMethodNode& node(NodeId id) const {
    check(id);
    return nodes_[id];
  }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  /// Nodes that accept a value of `type` as one of their inputs.
  std::span<const NodeId> iit_lookup(TypeId type) const {
    if (type >= iit_.size()) return {};
    return iit_[type];
  }

  std::span<const NodeId> iit_lookup(std::string_view type) const {
    auto id = hierarchy_.find(type);
    if (!id) return {};
    return iit_[*id];
  }

  /// Providers of m, grouped by the tag of their edge into m.
  std::span<const TagGroup> neighbors_forward(NodeId m) const {
    check(m);
    return forward_[m];
  }

  /// Consumers of m, grouped by the tag of the edge out of m.
  std::span<const TagGroup> neighbors_backward(NodeId m) const {
    check(m);
    return backward_[m];
  }

  DegreeStats degree_stats(NodeId m) const {
    check(m);
    DegreeStats s;
    for (const auto& g : forward_[m]) {
      s.indegree += g.members.size();
      s.in_tags.push_back(g.tag);
    }
    for (const auto& g : backward_[m]) {
      s.outdegree += g.members.size();
      s.out_tags.push_back(g.tag);
    }
    s.intagdegree = s.in_tags.size();
    s.outtagdegree = s.out_tags.size();
    return s;
  }

  /// Counting-based reachability of m given the currently available types.
  /// The counter starts at the number of distinct required types and drops
  /// once for each one some available type satisfies.
  bool is_reachable(NodeId m, std::span<const TypeId> available) const {
    check(m);
    const auto& node = nodes_[m];
    std::size_t counter = node.dependent_parameters();
    for (TypeId r : node.required) {
      for (TypeId a : available) {
        if (a < hierarchy_.size() && hierarchy_.matches(a, r)) {
          --counter;
          break;
        }
      }
    }
    return counter == 0;
  }

  /// Names not declared in the hierarchy can satisfy nothing and are ignored.
  bool is_reachable(NodeId m, std::span<const std::string> available) const {
    std::vector<TypeId> ids;
    for (const auto& a : available)
      if (auto id = hierarchy_.find(a)) ids.push_back(*id);
    return is_reachable(m, std::span<const TypeId>(ids));
  }

  std::string type_name(TypeId id) const { return hierarchy_.name(id); }

 private:
  static std::vector<TypeId> distinct(std::vector<TypeId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  void check(NodeId id) const {
    if (id >= nodes_.size()) throw InvalidInput("unknown node id " + std::to_string(id));
  }

  void index_neighbourhoods() {
    forward_.assign(nodes_.size(), {});
    backward_.assign(nodes_.size(), {});
    // Edges are sorted by (head, tag, tail): backward groups come out
    // ordered directly.
    for (const auto& e : edges_) {
      auto& out = backward_[e.head];
      if (out.empty() || out.back().tag != e.tag) out.push_back({e.tag, {}});
      out.back().members.push_back(e.tail);
    }
    std::vector<TaggedEdge> by_tail(edges_.begin(), edges_.end());
    std::sort(by_tail.begin(), by_tail.end(), [](const TaggedEdge& a, const TaggedEdge& b) {
      return std::tie(a.tail, a.tag, a.head) < std::tie(b.tail, b.tag, b.head);
    });
    for (const auto& e : by_tail) {
      auto& in = forward_[e.tail];
      if (in.empty() || in.back().tag != e.tag) in.push_back({e.tag, {}});
      in.back().members.push_back(e.head);
    }
  }

  TypeHierarchy hierarchy_;
  std::vector<ApiMethodNode> nodes_;
  std::unordered_map<std::string, NodeId> by_name_;
  std::vector<TaggedEdge> edges_;
  std::vector<std::vector<NodeId>> iit_;
  std::vector<std::vector<TagGroup>> forward_;
  std::vector<std::vector<TagGroup>> backward_;
};

/// Incremental reachability over the whole nodes table: each provided type
/// is pushed through the inverted index and decrements the counters of the
/// nodes it satisfies. Used by constrained decoding; the graph itself is
/// never touched.
class ReachabilityTracker {
 public:
  explicit ReachabilityTracker(const Adg& adg) : adg_(&adg) {
    const auto nodes = adg.nodes();
    counter_.resize(nodes.size());
    satisfied_.resize(nodes.size());
    for (const auto& n : nodes) {
      counter_[n.id] = n.dependent_parameters();
      satisfied_[n.id].assign(n.required.size(), false);
    }
  }

  void provide(TypeId type) {
    const auto& h = adg_->hierarchy();
    for (NodeId n : adg_->iit_lookup(type)) {
      const auto& req = adg_->nodes()[n].required;
      for (std::size_t k = 0; k < req.size(); ++k) {
        if (!satisfied_[n][k] && h.matches(type, req[k])) {
          satisfied_[n][k] = true;
          --counter_[n];
        }
      }
    }
  }

  bool reachable(NodeId n) const { return counter_.at(n) == 0; }
  std::size_t counter(NodeId n) const { return counter_.at(n); }

 private:
  const Adg* adg_;
  std::vector<std::size_t> counter_;
  std::vector<std::vector<bool>> satisfied_;
};

struct GraphStatistics {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t max_in = 0;
  double avg_in = 0.0;
  std::size_t max_out = 0;
  double avg_out = 0.0;
};

inline GraphStatistics statistics(const Adg& g) {
  GraphStatistics s;
  s.nodes = g.node_count();
  s.edges = g.edge_count();
  for (NodeId i = 0; i < g.node_count(); ++i) {
    auto d = g.degree_stats(i);
    s.max_in = std::max(s.max_in, d.indegree);
    s.max_out = std::max(s.max_out, d.outdegree);
  }
  if (s.nodes > 0) {
    s.avg_in = static_cast<double>(s.edges) / static_cast<double>(s.nodes);
    s.avg_out = s.avg_in;
  }
  return s;
}

// ---------------------------------------------------------------------------
// ADG-GRAPH-v1 canonical text dump.
//
//   ADG-GRAPH-v1
//   types <T>
//   <name> <parent or '-'>          (T lines, ascending name)
//   nodes <N>
//   <id> <name> <k> <in_1..in_k> <l> <out_1..out_l>   (N lines, ascending id)
//   edges <E>
//   <head> <tag> <tail>             (E lines, canonical order)
//   end
// ---------------------------------------------------------------------------

inline constexpr std::string_view kGraphHeader = "ADG-GRAPH-v1";

inline void dump_graph(const Adg& g, std::ostream& out) {
  const auto& h = g.hierarchy();
  out << kGraphHeader << '\n';
  out << "types " << h.size() << '\n';
  for (const auto& t : h.types()) out << t.name << ' ' << (t.parent ? *t.parent : "-") << '\n';
  out << "nodes " << g.node_count() << '\n';
  for (const auto& n : g.nodes()) {
    out << n.id << ' ' << n.name << ' ' << n.inputs.size();
    for (TypeId t : n.inputs) out << ' ' << h.name(t);
    out << ' ' << n.outputs.size();
    for (TypeId t : n.outputs) out << ' ' << h.name(t);
    out << '\n';
  }
  out << "edges " << g.edge_count() << '\n';
  for (const auto& e : g.edges()) out << e.head << ' ' << h.name(e.tag) << ' ' << e.tail << '\n';
  out << "end\n";
}

inline std::string dump_graph(const Adg& g) {
  std::ostringstream os;
  dump_graph(g, os);
  return os.str();
}

/// Rebuilds the graph from its dump and checks the stored edge table against
/// the rebuilt one.
inline Adg load_graph(std::istream& in) {
  auto fail = [](const std::string& what) -> FormatError { return FormatError("graph dump: " + what); };
  std::string line;
  if (!std::getline(in, line) || line != kGraphHeader) throw fail("missing ADG-GRAPH-v1 header");

  auto section = [&](std::string_view name) {
    std::string word;
    std::size_t count = 0;
    if (!std::getline(in, line)) throw fail("truncated before '" + std::string(name) + "'");
    std::istringstream ls(line);
    if (!(ls >> word >> count) || word != name) throw fail("expected '" + std::string(name) + " <count>'");
    return count;
  };

  std::vector<ParamType> types;
  for (std::size_t i = 0, n = section("types"); i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated type table");
    std::istringstream ls(line);
    ParamType t;
    std::string parent;
    if (!(ls >> t.name >> parent)) throw fail("bad type row");
    if (parent != "-") t.parent = parent;
    types.push_back(std::move(t));
  }

  std::vector<ApiMethod> methods;
  for (std::size_t i = 0, n = section("nodes"); i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated node table");
    std::istringstream ls(line);
    std::size_t id = 0, k = 0;
    ApiMethod m;
    if (!(ls >> id >> m.name >> k) || id != i) throw fail("bad node row " + std::to_string(i));
    m.inputs.resize(k);
    for (auto& t : m.inputs)
      if (!(ls >> t)) throw fail("bad node row " + std::to_string(i));
    if (!(ls >> k)) throw fail("bad node row " + std::to_string(i));
    m.outputs.resize(k);
    for (auto& t : m.outputs)
      if (!(ls >> t)) throw fail("bad node row " + std::to_string(i));
    methods.push_back(std::move(m));
  }

  Adg g;
  try {
    g = Adg::build(std::move(methods), TypeHierarchy(std::move(types)));
  } catch (const ConstructionError& e) {
    throw fail(e.what());
  }

  const std::size_t edges = section("edges");
  if (edges != g.edge_count()) throw fail("edge count does not match the node table");
  for (std::size_t i = 0; i < edges; ++i) {
    if (!std::getline(in, line)) throw fail("truncated edge table");
    std::istringstream ls(line);
    std::size_t head = 0, tail = 0;
    std::string tag;
    if (!(ls >> head >> tag >> tail)) throw fail("bad edge row");
    const auto& e = g.edges()[i];
    if (e.head != head || e.tail != tail || g.type_name(e.tag) != tag)
      throw fail("edge row " + std::to_string(i) + " disagrees with the node table");
  }
  if (!std::getline(in, line) || line != "end") throw fail("missing end marker");
  return g;
}

inline Adg load_graph(const std::string& text) {
  std::istringstream is(text);
  return load_graph(is);
}

}  // namespace adgs2s::graph
