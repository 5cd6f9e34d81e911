#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "adgs2s/metrics.hpp"
#include "metric_oracles.hpp"

using namespace adgs2s;
using namespace adgs2s::metrics;
using namespace adgs2s::testing;

namespace {

Tokens toks(std::initializer_list<const char*> ws) {
  Tokens t;
  for (const char* w : ws) t.emplace_back(w);
  return t;
}

std::vector<EvalPair> single(Tokens cand, Tokens ref) { return {EvalPair{std::move(cand), {std::move(ref)}}}; }

}  // namespace

TEST(Acc, Counting) {
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 10; ++i) pairs.push_back({toks({"a"}), {i < 3 ? toks({"a"}) : toks({"b"})}});
  EXPECT_DOUBLE_EQ(acc(pairs), 0.3);
  EXPECT_DOUBLE_EQ(acc(single(toks({"x", "y"}), toks({"x", "y"}))), 1.0);
  EXPECT_DOUBLE_EQ(acc(single(toks({"x"}), toks({"x", "y"}))), 0.0);
  std::vector<EvalPair> multi{{toks({"b"}), {toks({"a"}), toks({"b"})}}};
  EXPECT_DOUBLE_EQ(acc(multi), 1.0);
}

TEST(Metrics, EmptyCorpusAndMissingReferenceThrow) {
  std::vector<EvalPair> none;
  EXPECT_THROW(acc(none), InvalidInput);
  EXPECT_THROW(bleu(none), InvalidInput);
  EXPECT_THROW(rouge_n(none, 1), InvalidInput);
  EXPECT_THROW(rouge_l(none), InvalidInput);
  EXPECT_THROW(cider(none), InvalidInput);
  EXPECT_THROW(ribes(none), InvalidInput);
  EXPECT_THROW(evaluate(none), InvalidInput);
  std::vector<EvalPair> bare{{toks({"a"}), {}}};
  EXPECT_THROW(bleu(bare), InvalidInput);
  EXPECT_THROW(rouge_n(single(toks({"a"}), toks({"a"})), 0), InvalidInput);
}

TEST(Bleu, HandCases) {
  EXPECT_DOUBLE_EQ(bleu(single(toks({"a", "b", "c", "d", "e"}), toks({"a", "b", "c", "d", "e"}))), 1.0);
  EXPECT_DOUBLE_EQ(bleu(single(toks({"a", "b"}), toks({"a", "b"}))), 1.0);
  EXPECT_DOUBLE_EQ(bleu(single(toks({"x", "y", "z"}), toks({"a", "b", "c"}))), 0.0);
  EXPECT_DOUBLE_EQ(bleu(single({}, toks({"a"}))), 0.0);
  // Candidate of 2 against reference of 4, all n-grams matching: only the
  // brevity penalty exp(1 - 4/2) remains.
  EXPECT_NEAR(bleu(single(toks({"a", "b"}), toks({"a", "b", "c", "d"}))), std::exp(-1.0), 1e-15);
}

TEST(Bleu, ClosestReferenceLengthPrefersShorterOnTie) {
  // c = 3; references of length 2 and 4 are equally close, so r = 2 and no
  // penalty applies.
  std::vector<EvalPair> pairs{{toks({"a", "b", "c"}), {toks({"a", "b"}), toks({"a", "b", "c", "d"})}}};
  EXPECT_DOUBLE_EQ(bleu(pairs, 1), 1.0);
  EXPECT_NEAR(bleu(pairs), oracle_bleu(pairs), 1e-12);
}

TEST(Bleu, MatchesOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 1 + rng.below(6));
    EXPECT_NEAR(bleu(pairs), oracle_bleu(pairs), 1e-9) << trial;
    EXPECT_NEAR(bleu(pairs, 2), oracle_bleu(pairs, 2), 1e-9) << trial;
  }
}

TEST(RougeN, HandCasesAndOracle) {
  EXPECT_DOUBLE_EQ(rouge_n(single(toks({"a", "b", "c"}), toks({"a", "b", "c"})), 1), 1.0);
  EXPECT_DOUBLE_EQ(rouge_n(single(toks({"a", "b", "c"}), toks({"a", "b", "c"})), 2), 1.0);
  EXPECT_DOUBLE_EQ(rouge_n(single(toks({"x", "y"}), toks({"a", "b"})), 1), 0.0);
  // Clipping: the reference has one "a", the candidate two.
  EXPECT_DOUBLE_EQ(rouge_n(single(toks({"a", "a"}), toks({"a", "b"})), 1), 0.5);
  // Reference too short for bigrams: the pair is skipped.
  std::vector<EvalPair> mixed{{toks({"a"}), {toks({"a"})}}, {toks({"a", "b"}), {toks({"a", "c"})}}};
  EXPECT_DOUBLE_EQ(rouge_n(mixed, 2), 0.0);
  EXPECT_DOUBLE_EQ(rouge_n(mixed, 1), 0.75);
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 1 + rng.below(6));
    for (std::size_t n : {1u, 2u, 3u}) EXPECT_NEAR(rouge_n(pairs, n), oracle_rouge_n(pairs, n), 1e-9);
  }
}

TEST(RougeL, HandCases) {
  EXPECT_DOUBLE_EQ(rouge_l(single(toks({"a", "b", "c"}), toks({"a", "b", "c"}))), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l(single(toks({"d", "c", "b", "a"}), toks({"a", "b", "c", "d"}))), 0.25);
  EXPECT_DOUBLE_EQ(rouge_l(single({}, toks({"a"}))), 0.0);
}

TEST(RougeL, LcsMatchesExhaustiveSearch) {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const Tokens a = random_tokens(rng, 12, 4), b = random_tokens(rng, 12, 4);
    ASSERT_EQ(metrics::detail::lcs_length(a, b), exhaustive_lcs(a, b));
    ASSERT_EQ(metrics::detail::lcs_length(b, a), exhaustive_lcs(a, b));
  }
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 1 + rng.below(6), 12);
    EXPECT_NEAR(rouge_l(pairs), oracle_rouge_l(pairs), 1e-12);
  }
}

TEST(Cider, HandCasesAndOracle) {
  EXPECT_DOUBLE_EQ(cider(single(toks({"a", "b", "c"}), toks({"a", "b", "c"}))), 1.0);
  std::vector<EvalPair> disjoint{{toks({"x", "y"}), {toks({"a", "b"})}}, {toks({"z"}), {toks({"c", "d"})}}};
  EXPECT_DOUBLE_EQ(cider(disjoint), 0.0);
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 10);
    EXPECT_NEAR(cider(pairs), oracle_cider(pairs), 1e-9) << trial;
  }
}

TEST(Ribes, HandCases) {
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"a", "b", "c", "d"}), toks({"a", "b", "c", "d"})), 1.0);
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"d", "c", "b", "a"}), toks({"a", "b", "c", "d"})), 0.0);
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"a"}), toks({"a", "b"})), 0.5);
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"x", "y"}), toks({"a", "b"})), 0.5);
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"a"}), toks({"a"})), 1.0);
  // One adjacent swap among three tokens: Σd² = 2, C(4,3) = 4.
  EXPECT_DOUBLE_EQ(ribes_pair(toks({"b", "a", "c"}), toks({"a", "b", "c"})), 0.75);
}

TEST(Ribes, RandomPermutationsMatchRankTable) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 2 + rng.below(7);
    Tokens ref;
    for (std::uint64_t i = 0; i < n; ++i) ref.push_back("t" + std::to_string(i));
    Tokens cand = ref;
    rng.shuffle(cand.begin(), cand.end());
    EXPECT_NEAR(ribes_pair(cand, ref), oracle_ribes_pair(cand, ref), 1e-12);
  }
  for (int trial = 0; trial < 20; ++trial) {
    auto pairs = random_pairs(rng, 1 + rng.below(6));
    EXPECT_NEAR(ribes(pairs), oracle_ribes(pairs), 1e-12);
  }
}

TEST(F1, HarmonicMean) {
  EXPECT_DOUBLE_EQ(harmonic_mean(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.0, 0.7), 0.0);
  EXPECT_NEAR(harmonic_mean(0.6, 0.8), 0.6857142857142857, 1e-15);
  auto pairs = single(toks({"a", "b"}), toks({"a", "b", "c", "d"}));
  EXPECT_DOUBLE_EQ(f1(pairs), harmonic_mean(bleu(pairs), rouge_n(pairs, 1)));
}

TEST(Pov, ToyGrammar) {
  const std::vector<Tokens> cands{
      toks({"v0", "=", "api.m1", "(", ")", ";"}),                                              // ok
      toks({"v0", "=", "f", "(", ")", ";", "v1", "=", "g", "(", "v0", ",", "v0", ")", ";"}),  // ok
      toks({"("}),                                                                              // stray paren
      toks({}),                                                                                 // empty
      toks({"v0", "=", "f", "(", ")"}),                                                         // no semicolon
      toks({"v0", "=", "f", "(", "v1", ",", ")", ";"}),                                         // dangling comma
      toks({"x", "=", "f", "(", ")", ";"}),                                                     // bad variable
      toks({"v2", "=", "a.b.c", "(", "v1", ")", ";"}),                                          // ok
      toks({"v2", "=", "a.", "(", ")", ";"}),                                                   // bad callee
      toks({"v3", "=", "f", "(", "v1", "v2", ")", ";"}),                                        // missing comma
  };
  const std::vector<bool> expected{true, true, false, false, false, false, false, true, false, false};
  for (std::size_t i = 0; i < cands.size(); ++i) EXPECT_EQ(parses_as_program(cands[i]), expected[i]) << i;
  EXPECT_DOUBLE_EQ(pov_toy(cands), 0.3);
  EXPECT_DOUBLE_EQ(pov_toy(std::vector<Tokens>{toks({"("}), toks({")"})}), 0.0);
  EXPECT_DOUBLE_EQ(pov_toy(std::vector<Tokens>{}), 0.0);
}

TEST(MetricProperties, IdentityBound) {
  Rng rng(36);
  for (int trial = 0; trial < 30; ++trial) {
    auto pairs = random_pairs(rng, 1 + rng.below(6));
    for (auto& p : pairs) p.candidate = p.references[rng.below(p.references.size())];
    // With several references, the matched one must be the BLEU-closest for
    // the identity bound to be exact; use a single reference.
    for (auto& p : pairs) p.references = {p.candidate};
    const auto r = evaluate(pairs);
    EXPECT_DOUBLE_EQ(r.acc, 1.0);
    EXPECT_NEAR(r.bleu, 1.0, 1e-12);
    EXPECT_NEAR(r.rouge_1, 1.0, 1e-12);
    EXPECT_NEAR(r.rouge_2, 1.0, 1e-12);
    EXPECT_NEAR(r.rouge_l, 1.0, 1e-12);
    EXPECT_NEAR(r.cider, 1.0, 1e-12);
    EXPECT_NEAR(r.ribes, 1.0, 1e-12);
    EXPECT_NEAR(r.f1, 1.0, 1e-12);
  }
}

TEST(MetricProperties, RangesAndPermutationInvariance) {
  Rng rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    auto pairs = random_pairs(rng, 2 + rng.below(8));
    const auto r = evaluate(pairs);
    for (double v : {r.acc, r.bleu, r.f1, r.rouge_l, r.rouge_1, r.rouge_2, r.ribes, r.pov}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    EXPECT_GE(r.cider, 0.0);
    rng.shuffle(pairs.begin(), pairs.end());
    const auto s = evaluate(pairs);
    EXPECT_NEAR(s.bleu, r.bleu, 1e-12);
    EXPECT_NEAR(s.cider, r.cider, 1e-12);
    EXPECT_NEAR(s.rouge_l, r.rouge_l, 1e-12);
    EXPECT_NEAR(s.ribes, r.ribes, 1e-12);
    EXPECT_DOUBLE_EQ(s.acc, r.acc);
  }
}

TEST(Report, JsonRecordInTableOrder) {
  Rng rng(38);
  auto pairs = random_pairs(rng, 5);
  const auto r = evaluate(pairs);
  const std::string text = format_report(r);
  const auto j = nlohmann::ordered_json::parse(text);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"Acc", "Bleu", "F1", "CIDEr", "RougeL", "Rouge1", "Rouge2", "RIBES", "PoV",
                                            "size"}));
  EXPECT_EQ(j["Bleu"].get<double>(), r.bleu);
  EXPECT_EQ(j["RIBES"].get<double>(), r.ribes);
  EXPECT_EQ(j["size"].get<std::size_t>(), 5u);
  EXPECT_NE(table_header().find("RougeL"), std::string::npos);
  EXPECT_EQ(format_row("x", r).size(), table_header().size());
}
