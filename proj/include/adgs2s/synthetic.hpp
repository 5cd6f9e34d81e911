#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "adgs2s/adg.hpp"
#include "adgs2s/random.hpp"
#include "adgs2s/signatures.hpp"

namespace adgs2s::synthetic {

struct SyntheticSpec {
  std::size_t type_count = 8;
  std::size_t method_count = 24;
  std::size_t min_chain = 1;
  std::size_t max_chain = 4;
  std::size_t corpus_size = 64;
  std::uint64_t seed = 1;
  /// Probability that a type extends an earlier one.
  double parent_probability = 0.3;

  void validate() const {
    if (type_count < 1 || method_count < 1 || corpus_size < 1)
      throw InvalidInput("synthetic: type, method and corpus counts must be positive");
    if (min_chain < 1 || max_chain < min_chain) throw InvalidInput("synthetic: need 1 <= min_chain <= max_chain");
  }
};

struct SyntheticCorpus {
  ingest::SignatureCorpus signatures;
  std::vector<ingest::Example> examples;
  /// Method names of each example's chain, in call order.
  std::vector<std::vector<std::string>> chains;
};

inline std::string method_name(std::size_t i) { return "api.m" + std::to_string(i); }

/// Random API: types T0..Tn-1, each possibly extending an earlier type; the
/// first quarter of the methods (at least one) take no inputs, the rest take
/// one or two. Every method returns exactly one value.
inline ingest::SignatureCorpus random_api(const SyntheticSpec& spec, Rng& rng) {
  ingest::SignatureCorpus c;
  for (std::size_t i = 0; i < spec.type_count; ++i) {
    graph::ParamType t{"T" + std::to_string(i), std::nullopt};
    if (i > 0 && rng.bernoulli(spec.parent_probability)) t.parent = "T" + std::to_string(rng.below(i));
    c.types.push_back({t, i + 1, false});
  }
  const std::size_t sources = std::max<std::size_t>(1, spec.method_count / 4);
  auto random_type = [&] { return "T" + std::to_string(rng.below(spec.type_count)); };
  for (std::size_t i = 0; i < spec.method_count; ++i) {
    graph::ApiMethod m{method_name(i), {}, {random_type()}};
    if (i >= sources) {
      const auto ins = 1 + rng.below(2);
      for (std::uint64_t k = 0; k < ins; ++k) m.inputs.push_back(random_type());
    }
    c.methods.push_back({m, spec.type_count + i + 1});
  }
  return c;
}

namespace detail {

inline const char* const kLeadWords[] = {"first", "start by calling", "begin with", "initially use"};
inline const char* const kLinkWords[] = {"then", "then call", "next", "after that use", "and then invoke"};
inline const char* const kLastWords[] = {"finally", "and finally call", "last", "to finish use"};

}  // namespace detail

/// One reachability-respecting chain per example, starting from no
/// available values. Each call binds every input to the most recent
/// variable whose type satisfies it and stores its result in a fresh
/// variable. Code follows the toy grammar `vK = name ( args ) ;`.
inline SyntheticCorpus generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus out;
  out.signatures = random_api(spec, rng);
  const auto g = out.signatures.build_graph();
  const auto& h = g.hierarchy();

  for (std::size_t e = 0; e < spec.corpus_size; ++e) {
    const auto length = spec.min_chain + rng.below(spec.max_chain - spec.min_chain + 1);
    std::vector<graph::TypeId> var_types;
    std::vector<std::string> code, description, chain;
    for (std::size_t step = 0; step < length; ++step) {
      std::vector<graph::NodeId> options;
      for (graph::NodeId n = 0; n < g.node_count(); ++n)
        if (g.is_reachable(n, std::span<const graph::TypeId>(var_types))) options.push_back(n);
      if (options.empty()) throw ConstructionError("synthetic: no reachable method to extend a chain");
      const auto& node = g.node(options[rng.below(options.size())]);
      const std::string var = "v" + std::to_string(var_types.size());
      code.insert(code.end(), {var, "=", node.name, "("});
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const auto need = node.inputs[k];
        std::size_t v = var_types.size();
        while (v-- > 0)
          if (h.matches(var_types[v], need)) break;
        if (v == static_cast<std::size_t>(-1)) throw ConstructionError("synthetic: reachable method lacks an argument");
        if (k > 0) code.push_back(",");
        code.push_back("v" + std::to_string(v));
      }
      code.insert(code.end(), {")", ";"});
      for (auto t : node.outputs) var_types.push_back(t);

      const char* filler = step == 0 ? detail::kLeadWords[rng.below(4)]
                           : step + 1 == length ? detail::kLastWords[rng.below(4)]
                                                : detail::kLinkWords[rng.below(5)];
      for (auto& w : ingest::tokenize_description(filler)) description.push_back(std::move(w));
      description.push_back(node.name);
      chain.push_back(node.name);
    }
    out.examples.push_back({std::move(description), std::move(code)});
    out.chains.push_back(std::move(chain));
  }
  return out;
}

}  // namespace adgs2s::synthetic
