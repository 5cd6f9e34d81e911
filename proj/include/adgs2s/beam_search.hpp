#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <utility>
#include <vector>

#include "adgs2s/autodiff.hpp"
#include "adgs2s/error.hpp"
#include "adgs2s/vocabulary.hpp"

namespace adgs2s::decode {

/// Anything that yields next-token log-probabilities given a state and the
/// previous token.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, TokenId tok) {
  { m.initial() } -> std::convertible_to<typename M::State>;
  { m.step(s, tok) } -> std::convertible_to<std::pair<nn::Vector, typename M::State>>;
  { m.bos() } -> std::convertible_to<TokenId>;
  { m.eos() } -> std::convertible_to<TokenId>;
};

template <class State>
struct Hypothesis {
  std::vector<TokenId> tokens;  // includes the final EOS when finished
  double log_prob = 0.0;
  State state;
  bool finished = false;

  /// Cumulative log-probability divided by the token count.
  double score() const { return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size()); }
};

struct SearchResult {
  std::vector<TokenId> tokens;  // without EOS
  double log_prob = 0.0;
  double score = 0.0;
};

namespace detail {

template <class State>
SearchResult finish(const Hypothesis<State>& h, TokenId eos) {
  SearchResult r{h.tokens, h.log_prob, h.score()};
  if (!r.tokens.empty() && r.tokens.back() == eos) r.tokens.pop_back();
  return r;
}

/// Better score first; equal scores fall back to the lexicographically
/// smaller token sequence.
template <class State>
bool ranks_before(const Hypothesis<State>& a, const Hypothesis<State>& b) {
  const double sa = a.score(), sb = b.score();
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

}  // namespace detail

/// Argmax rollout; ties go to the lowest token id.
template <StepModel M>
SearchResult greedy(const M& model, std::size_t max_len) {
  if (max_len < 1) throw InvalidInput("greedy: max_len must be >= 1");
  Hypothesis<typename M::State> h{{}, 0.0, model.initial(), false};
  TokenId prev = model.bos();
  while (h.tokens.size() < max_len) {
    auto [logp, next] = model.step(h.state, prev);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logp.size(); ++k)
      if (logp(k) > logp(best)) best = k;
    prev = static_cast<TokenId>(best);
    h.tokens.push_back(prev);
    h.log_prob += logp(best);
    h.state = std::move(next);
    if (prev == model.eos()) break;
  }
  return detail::finish(h, model.eos());
}

/// Beam search ranked by length-normalised log-probability. Each live
/// hypothesis proposes its `width` most likely successors (ties by token
/// id); finished hypotheses stay in the pool unchanged. A hypothesis that
/// reaches `max_len` tokens is finished. When `width > 1` the greedy rollout
/// is also scored and returned if it ranks higher.
template <StepModel M>
SearchResult beam_search(const M& model, std::size_t width, std::size_t max_len) {
  if (width < 1) throw InvalidInput("beam_search: width must be >= 1");
  if (max_len < 1) throw InvalidInput("beam_search: max_len must be >= 1");
  using H = Hypothesis<typename M::State>;
  std::vector<H> beam{H{{}, 0.0, model.initial(), false}};
  std::vector<Eigen::Index> order;
  for (std::size_t len = 0; len < max_len; ++len) {
    std::vector<H> pool;
    for (auto& h : beam) {
      if (h.finished) {
        pool.push_back(std::move(h));
        continue;
      }
      auto [logp, next] = model.step(h.state, h.tokens.empty() ? model.bos() : h.tokens.back());
      order.resize(static_cast<std::size_t>(logp.size()));
      for (Eigen::Index k = 0; k < logp.size(); ++k) order[static_cast<std::size_t>(k)] = k;
      const auto take = std::min<std::size_t>(width, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                        [&](Eigen::Index a, Eigen::Index b) { return logp(a) > logp(b) || (logp(a) == logp(b) && a < b); });
      for (std::size_t k = 0; k < take; ++k) {
        const Eigen::Index tok = order[k];
        if (logp(tok) == -std::numeric_limits<double>::infinity()) break;
        H child{h.tokens, h.log_prob + logp(tok), next, false};
        child.tokens.push_back(static_cast<TokenId>(tok));
        child.finished = tok == model.eos() || child.tokens.size() >= max_len;
        pool.push_back(std::move(child));
      }
    }
    if (pool.empty()) break;
    std::sort(pool.begin(), pool.end(), detail::ranks_before<typename M::State>);
    if (pool.size() > width) pool.resize(width);
    beam = std::move(pool);
    if (std::all_of(beam.begin(), beam.end(), [](const H& h) { return h.finished; })) break;
  }
  SearchResult best = detail::finish(beam.front(), model.eos());
  if (width > 1) {
    SearchResult g = greedy(model, max_len);
    if (g.score > best.score) return g;
  }
  return best;
}

}  // namespace adgs2s::decode
