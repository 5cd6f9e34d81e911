#include <gtest/gtest.h>

#include <functional>
#include <limits>

#include "adgs2s/beam_search.hpp"
#include "adgs2s/random.hpp"

using namespace adgs2s;
using namespace adgs2s::decode;
using nn::Vector;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log-probabilities that depend on the whole history through a seeded
/// hash, so there is no structure for the search to exploit.
struct TableModel {
  using State = std::vector<TokenId>;
  Eigen::Index vocab = 5;
  std::uint64_t seed = 1;
  double sharpness = 2.0;
  std::vector<TokenId> banned;

  State initial() const { return {}; }
  TokenId bos() const { return 1; }
  TokenId eos() const { return 0; }

  std::pair<Vector, State> step(const State& s, TokenId prev) const {
    State next = s;
    next.push_back(prev);
    std::uint64_t h = seed;
    for (TokenId t : next) h = h * 1000003u + static_cast<std::uint64_t>(t + 7);
    Rng rng(h);
    Vector logits(vocab);
    for (Eigen::Index k = 0; k < vocab; ++k) logits(k) = sharpness * rng.uniform(-1.0, 1.0);
    for (TokenId b : banned) logits(b) = kNegInf;
    const double mx = logits.maxCoeff();
    const double z = std::log((logits.array() - mx).exp().sum()) + mx;
    return {(logits.array() - z).matrix(), next};
  }
};
static_assert(StepModel<TableModel>);

struct Best {
  std::vector<TokenId> tokens;
  double score = kNegInf;
};

/// Every sequence that ends in EOS or reaches max_len, scored like the beam.
template <class M>
Best exhaustive(const M& m, std::size_t max_len) {
  Best best;
  std::function<void(typename M::State, TokenId, std::vector<TokenId>, double)> walk =
      [&](typename M::State s, TokenId prev, std::vector<TokenId> toks, double lp) {
        auto [logp, next] = m.step(s, prev);
        for (Eigen::Index k = 0; k < logp.size(); ++k) {
          if (logp(k) == kNegInf) continue;
          auto t = toks;
          t.push_back(static_cast<TokenId>(k));
          const double l = lp + logp(k);
          if (static_cast<TokenId>(k) == m.eos() || t.size() == max_len) {
            const double score = l / static_cast<double>(t.size());
            if (score > best.score || (score == best.score && t < best.tokens)) best = {t, score};
          } else {
            walk(next, static_cast<TokenId>(k), t, l);
          }
        }
      };
  walk(m.initial(), m.bos(), {}, 0.0);
  if (!best.tokens.empty() && best.tokens.back() == m.eos()) best.tokens.pop_back();
  return best;
}

}  // namespace

TEST(BeamSearch, WideBeamFindsExhaustiveOptimum) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    TableModel m;
    m.seed = seed;
    m.vocab = 4;
    const std::size_t max_len = 4;
    const auto oracle = exhaustive(m, max_len);
    // 4^4 leaves: a beam this wide never prunes.
    const auto got = beam_search(m, 256, max_len);
    EXPECT_EQ(got.tokens, oracle.tokens) << seed;
    EXPECT_NEAR(got.score, oracle.score, 1e-12) << seed;
  }
}

TEST(BeamSearch, WidthOneIsGreedy) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    TableModel m;
    m.seed = seed;
    m.vocab = 6;
    const auto b = beam_search(m, 1, 10);
    const auto g = greedy(m, 10);
    EXPECT_EQ(b.tokens, g.tokens) << seed;
    EXPECT_DOUBLE_EQ(b.log_prob, g.log_prob);
  }
}

TEST(BeamSearch, NeverWorseThanGreedy) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    TableModel m;
    m.seed = seed;
    m.vocab = 6;
    for (std::size_t w : {2u, 3u, 5u}) EXPECT_GE(beam_search(m, w, 8).score, greedy(m, 8).score - 1e-15);
  }
}

TEST(BeamSearch, ForcedPathIsFound) {
  // One token carries all the mass at every step, then EOS.
  struct Forced {
    using State = int;
    State initial() const { return 0; }
    TokenId bos() const { return 1; }
    TokenId eos() const { return 0; }
    std::pair<Vector, State> step(State s, TokenId) const {
      Vector lp = Vector::Constant(5, kNegInf);
      lp(s < 3 ? 2 + s % 2 : 0) = 0.0;
      return {lp, s + 1};
    }
  };
  const auto r = beam_search(Forced{}, 5, 20);
  EXPECT_EQ(r.tokens, (std::vector<TokenId>{2, 3, 2}));
  EXPECT_DOUBLE_EQ(r.log_prob, 0.0);
  EXPECT_EQ(greedy(Forced{}, 20).tokens, r.tokens);
}

TEST(BeamSearch, MaskedTokensNeverAppear) {
  TableModel m;
  m.vocab = 6;
  m.banned = {3, 4};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    m.seed = seed;
    for (TokenId t : beam_search(m, 4, 8).tokens) {
      EXPECT_NE(t, 3);
      EXPECT_NE(t, 4);
    }
  }
}

TEST(BeamSearch, MaxLenCapsOutputAndIsDeterministic) {
  TableModel m;
  m.vocab = 5;
  m.banned = {0};  // EOS unreachable
  const auto a = beam_search(m, 3, 7);
  EXPECT_EQ(a.tokens.size(), 7u);
  EXPECT_EQ(beam_search(m, 3, 7).tokens, a.tokens);
  EXPECT_EQ(greedy(m, 7).tokens.size(), 7u);
}

TEST(BeamSearch, RejectsBadArguments) {
  TableModel m;
  EXPECT_THROW(beam_search(m, 0, 5), InvalidInput);
  EXPECT_THROW(beam_search(m, 2, 0), InvalidInput);
  EXPECT_THROW(greedy(m, 0), InvalidInput);
}

TEST(Greedy, TiesGoToLowestId) {
  struct Flat {
    using State = int;
    State initial() const { return 0; }
    TokenId bos() const { return 1; }
    TokenId eos() const { return 0; }
    std::pair<Vector, State> step(State s, TokenId) const {
      Vector lp = Vector::Constant(4, std::log(0.25));
      if (s == 0) lp(0) = kNegInf;
      return {lp, s + 1};
    }
  };
  EXPECT_EQ(greedy(Flat{}, 5).tokens, (std::vector<TokenId>{1}));
}
