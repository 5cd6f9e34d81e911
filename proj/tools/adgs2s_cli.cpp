// adgs2s: command-line front end for graph building, training, generation,
// evaluation, ablation sweeps and synthetic corpora.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adgs2s/pipeline.hpp"

namespace {

using namespace adgs2s;
using pipeline::PipelineConfig;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> max_len;
  bool reach_filter = false;
  std::optional<std::size_t> workers;
  std::optional<std::string> signatures, train, valid, test, checkpoint, graph, embeddings, history;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--beam", o.beam, "Beam width");
  cmd->add_option("--max-len", o.max_len, "Maximum generated length");
  cmd->add_flag("--reach-filter", o.reach_filter, "Mask API tokens whose inputs are not yet available");
  cmd->add_option("--workers", o.workers, "Decoding threads for evaluation");
  cmd->add_option("--signatures", o.signatures, "Signature file");
  cmd->add_option("--train", o.train, "Training set (TSV)");
  cmd->add_option("--valid", o.valid, "Validation set (TSV)");
  cmd->add_option("--test", o.test, "Test set (TSV)");
  cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  cmd->add_option("--graph", o.graph, "Graph dump path");
  cmd->add_option("--history", o.history, "Training history output");
}

/// Defaults, then the config file, then flags.
PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c;
  if (!o.config_path.empty()) pipeline::apply_json(c, pipeline::read_file(o.config_path, "config"));
  if (o.seed) c.seed = *o.seed;
  if (o.beam) c.decode.beam = *o.beam;
  if (o.max_len) c.decode.max_len = *o.max_len;
  if (o.reach_filter) c.decode.reach_filter = true;
  if (o.workers) c.decode.workers = *o.workers;
  auto set = [](const std::optional<std::string>& v, std::string& into) {
    if (v) into = *v;
  };
  set(o.signatures, c.paths.signatures);
  set(o.train, c.paths.train);
  set(o.valid, c.paths.valid);
  set(o.test, c.paths.test);
  set(o.checkpoint, c.paths.checkpoint);
  set(o.graph, c.paths.graph);
  set(o.embeddings, c.paths.embeddings);
  set(o.history, c.paths.history);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::pair<std::string, std::vector<std::string>> parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("axis must look like name=v1,v2 (got '" + spec + "')");
  std::vector<std::string> values;
  std::string cur;
  for (char ch : spec.substr(eq + 1)) {
    if (ch == ',') {
      if (!cur.empty()) values.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) values.push_back(cur);
  return {spec.substr(0, eq), values};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"API-dependency-graph guided sequence-to-sequence code generation"};
  app.require_subcommand(1);

  Overrides o;
  auto* build = app.add_subcommand("build-graph", "Build the API dependency graph and print its statistics");
  add_common(build, o);

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train, o);
  std::optional<std::string> dump_embeddings;
  train->add_option("--dump-embeddings", dump_embeddings, "Write the node embedding table here");

  auto* gen = app.add_subcommand("generate", "Generate code for one description");
  add_common(gen, o);
  std::string description;
  gen->add_option("description", description, "Natural-language description")->required();

  auto* eval = app.add_subcommand("evaluate", "Generate for the test set and print the metric report");
  add_common(eval, o);

  auto* ablate = app.add_subcommand("ablate", "Train one model per axis value and compare");
  add_common(ablate, o);
  std::vector<std::string> axes;
  ablate->add_option("--axis", axes, "name=v1,v2 with name in {direction, labels, hops, aggregator}")->required();

  auto* synth = app.add_subcommand("gen-synthetic", "Write a synthetic signature file and datasets");
  synthetic::SyntheticSpec spec;
  std::string out_dir = ".";
  synth->add_option("--types", spec.type_count, "Number of types");
  synth->add_option("--methods", spec.method_count, "Number of methods");
  synth->add_option("--min-chain", spec.min_chain, "Shortest call chain");
  synth->add_option("--max-chain", spec.max_chain, "Longest call chain");
  synth->add_option("--size", spec.corpus_size, "Number of examples");
  synth->add_option("--seed", spec.seed, "Random seed");
  synth->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pipeline::kUsage;
  }
  if (dump_embeddings) o.embeddings = dump_embeddings;

  try {
    if (synth->parsed()) {
      pipeline::cmd_gen_synthetic(spec, out_dir);
      std::cout << "wrote signatures.txt, train.tsv, valid.tsv, test.tsv to " << out_dir << "\n";
      return pipeline::kSuccess;
    }
    const PipelineConfig c = resolve(o);
    if (build->parsed()) {
      std::cout << pipeline::format_statistics(pipeline::cmd_build_graph(c));
    } else if (train->parsed()) {
      auto outcome = pipeline::cmd_train(c, &std::cout);
      std::cerr << "trained " << outcome.result.steps << " steps";
      if (outcome.result.best_validation_bleu) std::cerr << ", best validation BLEU " << *outcome.result.best_validation_bleu;
      std::cerr << "\n";
    } else if (gen->parsed()) {
      auto m = pipeline::load_model(c);
      std::cout << pipeline::cmd_generate(c, *m, description) << "\n";
    } else if (eval->parsed()) {
      std::cout << metrics::format_report(pipeline::cmd_evaluate(c)) << "\n";
    } else if (ablate->parsed()) {
      std::vector<std::pair<std::string, std::vector<std::string>>> parsed;
      for (const auto& a : axes) parsed.push_back(parse_axis(a));
      const auto rows = pipeline::cmd_ablate(c, parsed);
      std::cout << metrics::table_header() << "\n";
      for (const auto& r : rows) std::cout << metrics::format_row(r.label, r.report) << "\n";
      for (const auto& r : rows)
        std::cout << "{\"axis\": \"" << r.axis << "\", \"label\": \"" << r.label
                  << "\", \"report\": " << metrics::format_report(r.report) << "}\n";
    }
    return pipeline::kSuccess;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pipeline::exit_code_for(e);
  }
}
