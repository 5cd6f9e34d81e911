// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "adgs2s/pipeline.hpp"
#include "embedder_oracle.hpp"
#include "metric_oracles.hpp"
#include "model_support.hpp"

using namespace adgs2s;
namespace fs = std::filesystem;
namespace t = adgs2s::testing;
using t::build;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::set<t::EdgeTriple> edge_names(const graph::Adg& g) {
  std::set<t::EdgeTriple> out;
  for (const auto& e : g.edges()) out.emplace(g.node(e.head).name, g.type_name(e.tag), g.node(e.tail).name);
  return out;
}

bool oracle_reachable(const t::RandomCorpus& c, std::size_t m, const std::vector<std::string>& avail) {
  const auto& ins = c.methods[m].inputs;
  return std::all_of(ins.begin(), ins.end(), [&](const std::string& r) {
    return std::any_of(avail.begin(), avail.end(),
                       [&](const std::string& a) { return t::oracle_subtype(c.types, a, r); });
  });
}

// ---------------------------------------------------------------------------

Outcome toy_graph() {
  const auto c = t::five_method_corpus();
  const auto g = build(c);
  const auto got = edge_names(g);
  const auto want = t::oracle_edges(c);
  const bool named = got.count({"m2", "C", "m4"}) && got.count({"m3", "D", "m4"});
  return {named && got == want, fmt("%zu edges, oracle %zu", got.size(), want.size())};
}

Outcome reachability() {
  const auto fig = t::five_method_corpus();
  const auto g = build(fig);
  const auto m4 = *g.find("m4");
  std::vector<std::string> only_c{"C"}, both{"C", "D"};
  bool ok = !g.is_reachable(m4, std::span<const std::string>(only_c)) &&
            g.is_reachable(m4, std::span<const std::string>(both));
  Rng rng(2024);
  std::size_t mismatches = 0, queries = 0;
  for (int corpus = 0; corpus < 10; ++corpus) {
    const auto c = t::random_corpus(rng, 3 + rng.below(6), 10 + rng.below(30));
    const auto rg = build(c);
    for (int q = 0; q < 100; ++q, ++queries) {
      const auto m = static_cast<graph::NodeId>(rng.below(rg.node_count()));
      std::vector<std::string> avail;
      for (const auto& ty : c.types)
        if (rng.bernoulli(0.4)) avail.push_back(ty.name);
      if (rg.is_reachable(m, std::span<const std::string>(avail)) != oracle_reachable(c, m, avail)) ++mismatches;
    }
  }
  return {ok && mismatches == 0, fmt("toy %s, %zu/%zu random queries disagree", ok ? "ok" : "wrong", mismatches, queries)};
}

Outcome graph_oracles() {
  Rng rng(77);
  std::size_t bad_edges = 0, bad_iit = 0, total_edges = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = t::random_corpus(rng, 4 + rng.below(12), 1 + rng.below(200));
    const auto g = build(c);
    total_edges += g.edge_count();
    if (edge_names(g) != t::oracle_edges(c)) ++bad_edges;
    for (const auto& ty : c.types) {
      std::vector<graph::NodeId> scan;
      for (graph::NodeId i = 0; i < c.methods.size(); ++i) {
        const auto& ins = c.methods[i].inputs;
        if (std::any_of(ins.begin(), ins.end(), [&](const std::string& r) { return t::oracle_subtype(c.types, ty.name, r); }))
          scan.push_back(i);
      }
      const auto got = g.iit_lookup(ty.name);
      if (std::vector<graph::NodeId>(got.begin(), got.end()) != scan) ++bad_iit;
    }
  }
  return {bad_edges == 0 && bad_iit == 0,
          fmt("%zu edge sets and %zu IIT rows differ (%zu edges checked)", bad_edges, bad_iit, total_edges)};
}

Outcome embedder_oracle() {
  using namespace embed;
  Rng rng(404);
  double worst = 0.0;
  std::size_t runs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = t::random_corpus(rng, 2 + rng.below(6), 1 + rng.below(20));
    const auto g = build(c);
    const auto dim = static_cast<Eigen::Index>(1 + rng.below(8));
    for (int hops : {1, 2})
      for (auto agg : {Aggregator::Mean, Aggregator::Pooling, Aggregator::Lstm})
        for (bool labelled : {true, false})
          for (bool directed : {true, false}) {
            EmbedderConfig cfg;
            cfg.dim = dim;
            cfg.hops = hops;
            cfg.aggregator = agg;
            cfg.use_edge_labels = labelled;
            cfg.use_edge_direction = directed;
            cfg.virtualization = trial % 2 ? Virtualization::Concat : Virtualization::Mean;
            cfg.concat_cap = 3;
            Rng prng(1000 + trial);
            EmbedderParams p(g.node_count(), cfg, prng);
            for (auto& l : p.aggregators) l.bias.value = t::random_matrix(prng, l.bias.value.rows(), 1, 0.3);
            worst = std::max(worst, (embed_all(g, p, cfg) - t::oracle_embed(g, p, cfg)).cwiseAbs().maxCoeff());
            ++runs;
          }
  }
  return {worst < 1e-10, fmt("max |diff| %.3g over %zu configurations", worst, runs)};
}

Outcome gradients() {
  auto f = t::micro_model();
  const auto [err, name] = t::worst_gradient_error(*f.model, f.batch);
  return {err < 1e-4, fmt("worst relative error %.3g (%s), %zu parameters", err, name.c_str(), f.model->parameters().size())};
}

Outcome schedule() {
  const double got = nn::lrate(4000, 256, 4000);
  const long double want = 1.0L / (std::sqrt(256.0L) * std::sqrt(4000.0L));
  bool monotone = true;
  for (int s = 1; s < 4000; ++s) monotone &= nn::lrate(s, 256, 4000) < nn::lrate(s + 1, 256, 4000);
  for (int s = 4000; s < 8000; ++s) monotone &= nn::lrate(s, 256, 4000) > nn::lrate(s + 1, 256, 4000);
  const double diff = std::abs(static_cast<long double>(got) - want);
  return {diff < 1e-12 && monotone, fmt("lrate %.17g, |diff| %.3g, %s", got, diff, monotone ? "up then down" : "not monotone")};
}

// Shared by the overfit and decode checks: the first 32 examples train, the
// remaining 50 are unseen descriptions.
synthetic::SyntheticCorpus overfit_corpus() {
  synthetic::SyntheticSpec s;
  s.type_count = 6;
  s.method_count = 12;
  s.max_chain = 3;
  s.corpus_size = 82;
  s.seed = 7;
  return synthetic::generate(s);
}

std::unique_ptr<model::Seq2SeqModel> overfit_model;

Outcome overfit() {
  const auto corpus = overfit_corpus();
  const std::vector<ingest::Example> train(corpus.examples.begin(), corpus.examples.begin() + 32);
  std::vector<std::vector<std::string>> d, c;
  for (const auto& e : train) {
    d.push_back(e.description);
    c.push_back(e.code);
  }
  model::ModelConfig mc;
  mc.word_dim = mc.code_dim = 32;
  mc.embedder.dim = 32;
  mc.hidden = mc.mlp_hidden = 64;
  mc.dropout = 0.0;
  auto m = std::make_unique<model::Seq2SeqModel>(Vocabulary::build(d), Vocabulary::build(c),
                                                 corpus.signatures.build_graph(), mc, 1);
  std::vector<model::EncodedExample> data;
  for (const auto& e : train) data.push_back(m->encode_example(e));
  model::TrainConfig tc;
  tc.batch_size = 8;
  tc.max_steps = 2000;
  tc.max_epochs = 100000;
  tc.interval = 100;
  tc.patience = 100;
  tc.max_len = 60;
  tc.adam.d_model = 64;
  tc.adam.warmup_steps = 200;
  const auto r = model::train(*m, data, data, tc);
  pipeline::PipelineConfig pc;
  pc.decode.max_len = 60;
  const auto report = pipeline::score(train, pipeline::generate_all(pc, *m, train));
  overfit_model = std::move(m);
  return {report.acc >= 0.9 && r.steps <= 2000, fmt("Acc %.3f after %zu steps", report.acc, r.steps)};
}

Outcome metric_oracles() {
  using namespace metrics;
  Rng rng(99);
  const auto pairs = t::random_pairs(rng, 100);
  double worst = 0.0;
  auto check = [&](std::span<const EvalPair> ps) {
    const std::vector<EvalPair> v(ps.begin(), ps.end());
    worst = std::max({worst, std::abs(bleu(ps) - t::oracle_bleu(v)), std::abs(rouge_n(ps, 1) - t::oracle_rouge_n(v, 1)),
                      std::abs(rouge_n(ps, 2) - t::oracle_rouge_n(v, 2)), std::abs(rouge_l(ps) - t::oracle_rouge_l(v)),
                      std::abs(cider(ps) - t::oracle_cider(v)), std::abs(ribes(ps) - t::oracle_ribes(v))});
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) check(std::span(pairs).subspan(i, 1));
  check(pairs);

  std::vector<EvalPair> same;
  for (int i = 0; i < 100; ++i) {
    auto ref = t::random_tokens(rng, 10, 5, 2);
    same.push_back({ref, {ref}});
  }
  const auto r = evaluate(same);
  double gap = 0.0;
  for (double v : {r.acc, r.bleu, r.rouge_1, r.rouge_2, r.rouge_l, r.cider, r.ribes}) gap = std::max(gap, std::abs(1.0 - v));
  return {worst < 1e-9 && gap < 1e-9, fmt("max oracle diff %.3g, identity gap %.3g", worst, gap)};
}

Outcome aggregator_trend() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    synthetic::SyntheticSpec s;
    s.type_count = 8;
    s.method_count = 20;
    s.corpus_size = 240;
    s.min_chain = 4;
    s.max_chain = 5;
    s.seed = 100 + seed;
    const auto corpus = synthetic::generate(s);
    const std::size_t n_test = 48;
    const std::vector<ingest::Example> train(corpus.examples.begin(), corpus.examples.end() - n_test);
    const std::vector<ingest::Example> test(corpus.examples.end() - n_test, corpus.examples.end());
    std::vector<std::vector<std::string>> d, c;
    for (const auto& e : train) {
      d.push_back(e.description);
      c.push_back(e.code);
    }
    std::map<embed::Aggregator, double> ribes;
    for (auto agg : {embed::Aggregator::Mean, embed::Aggregator::Lstm}) {
      model::ModelConfig mc;
      mc.word_dim = mc.code_dim = 32;
      mc.embedder.dim = 32;
      mc.hidden = mc.mlp_hidden = 64;
      mc.embedder.aggregator = agg;
      model::Seq2SeqModel m(Vocabulary::build(d), Vocabulary::build(c), corpus.signatures.build_graph(), mc, seed);
      std::vector<model::EncodedExample> data;
      for (const auto& e : train) data.push_back(m.encode_example(e));
      model::TrainConfig tc;
      tc.batch_size = 16;
      tc.max_steps = 1500;
      tc.max_epochs = 100000;
      tc.seed = seed;
      tc.max_len = 80;
      tc.adam.d_model = 64;
      tc.adam.warmup_steps = 200;
      model::train(m, data, {}, tc);
      pipeline::PipelineConfig pc;
      pc.decode.beam = 1;
      pc.decode.max_len = 80;
      ribes[agg] = pipeline::score(test, pipeline::generate_all(pc, m, test)).ribes;
    }
    const double lstm = ribes[embed::Aggregator::Lstm], mean = ribes[embed::Aggregator::Mean];
    wins += lstm >= mean;
    detail += fmt("%sseed %d lstm %.5f mean %.5f", detail.empty() ? "" : "; ", static_cast<int>(seed), lstm, mean);
  }
  return {wins >= 2, fmt("%d/3 seeds, ", wins) + detail};
}

Outcome decode_contract() {
  if (!overfit_model) return {false, "no trained model"};
  auto& m = *overfit_model;
  const auto corpus = overfit_corpus();
  const std::vector<ingest::Example> unseen(corpus.examples.begin() + 32, corpus.examples.end());
  const auto nodes = model::node_table(m);
  const auto& g = m.graph();
  std::size_t differ = 0, api_tokens = 0, unreachable = 0;
  for (const auto& e : unseen) {
    const auto ids = m.description_vocab().encode(e.description);
    model::Stepper plain(m, ids, nodes);
    if (decode::beam_search(plain, 1, 60).tokens != decode::greedy(plain, 60).tokens) ++differ;

    std::vector<graph::TypeId> available;
    for (const auto& tok : m.code_vocab().decode(model::generate(m, ids, nodes, 5, 60, true))) {
      const auto node = g.find(tok);
      if (!node) continue;
      ++api_tokens;
      if (!g.is_reachable(*node, std::span<const graph::TypeId>(available))) ++unreachable;
      for (auto ty : g.node(*node).outputs) available.push_back(ty);
    }
  }
  return {differ == 0 && unreachable == 0 && api_tokens > 0,
          fmt("%zu/%zu beam-1 decodes differ from greedy; %zu/%zu filtered API tokens unreachable", differ, unseen.size(),
              unreachable, api_tokens)};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / ("adgs2s_acceptance_" + std::to_string(::getpid()));
  synthetic::SyntheticSpec s;
  s.type_count = 6;
  s.method_count = 14;
  s.corpus_size = 60;
  s.seed = 11;
  auto run = [&](const std::string& tag) {
    const auto dir = root / tag;
    pipeline::cmd_gen_synthetic(s, dir.string());
    pipeline::PipelineConfig c;
    c.paths.signatures = (dir / "signatures.txt").string();
    c.paths.train = (dir / "train.tsv").string();
    c.paths.valid = (dir / "valid.tsv").string();
    c.paths.test = (dir / "test.tsv").string();
    c.paths.graph = (dir / "graph.txt").string();
    c.paths.checkpoint = (dir / "model.ckpt").string();
    c.model.word_dim = c.model.code_dim = 16;
    c.model.embedder.dim = 16;
    c.model.hidden = c.model.mlp_hidden = 24;
    c.train.max_steps = 60;
    c.train.interval = 20;
    c.train.adam.d_model = 24;
    c.train.adam.warmup_steps = 50;
    c.decode.max_len = 60;
    c.seed = 5;
    pipeline::cmd_build_graph(c);
    pipeline::cmd_train(c);
    const auto report = pipeline::cmd_evaluate(c);
    return std::make_tuple(pipeline::read_file(c.paths.graph, "graph"), pipeline::read_file(c.paths.checkpoint, "checkpoint"),
                           report);
  };
  const auto a = run("a");
  const auto b = run("b");
  fs::remove_all(root);
  const bool graphs = std::get<0>(a) == std::get<0>(b);
  const bool ckpt = std::get<1>(a) == std::get<1>(b);
  const bool report = std::get<2>(a) == std::get<2>(b);
  return {graphs && ckpt && report, fmt("graph dump %s, checkpoint (%zu bytes) %s, report %s", graphs ? "same" : "differs",
                                        std::get<1>(a).size(), ckpt ? "same" : "differs", report ? "same" : "differs")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "toy graph edges", 1, toy_graph},
      {2, "reachability counter", 5, reachability},
      {3, "graph and IIT oracles", 30, graph_oracles},
      {4, "embedder transcription", 60, embedder_oracle},
      {5, "gradient check", 120, gradients},
      {6, "learning-rate schedule", 1, schedule},
      {7, "overfit 32 pairs", 600, overfit},
      {8, "metric oracles", 30, metric_oracles},
      {9, "lstm vs mean aggregator", 1800, aggregator_trend},
      {10, "decode contract", 300, decode_contract},
      {11, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_seconds) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs limit)", c.limit_seconds);
    }
    failures += !o.pass;
    std::printf("%s [%2d] %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
