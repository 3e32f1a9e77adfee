#include "sgst/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgst/checkpoint.hpp"
#include "sgst/inference.hpp"
#include "sgst/metrics.hpp"
#include "sgst/synthetic.hpp"
#include "sgst/trainer.hpp"

namespace sgst {

using nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct SynthFlags {
  std::size_t count = 64;
  std::uint64_t seed = 0;
  std::uint64_t first_index = 0;
  std::string pools;
  std::string out;
};

struct TrainFlags {
  std::string data;
  std::string checkpoint;
  std::string log;
  std::string preset = "desk";
  bool paper_scale = false;
  std::string alpha;
  std::uint64_t seed = 1;
  std::size_t epochs = 0;
  std::uint64_t max_steps = 0;
  bool max_steps_set = false;
  std::size_t batch_tokens = 0;
  double lr = 0.0;
  std::uint64_t warmup = 0;
  double target_loss = -1.0;
  bool literal_sqrt_d = false;
};

struct GenerateFlags {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t beam = 5;
  bool greedy = false;
  std::size_t max_len = 100;
};

struct EvalFlags {
  std::string generations;
  std::string data;
};

struct InspectFlags {
  std::string checkpoint;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  return out;
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const SyntheticTaskSpec spec =
      f.pools.empty() ? SyntheticTaskSpec::defaults(f.seed) : SyntheticTaskSpec::from_pool_json(read_file(f.pools), f.seed);
  const auto examples = generate_synthetic(spec, f.count, f.first_index);
  std::ofstream file = open_output(f.out);
  for (const auto& ex : examples) file << serialize_example(ex) << '\n';
  if (!file) throw Error("failed writing " + f.out);
  const std::size_t vocab = examples.empty() ? Vocabulary().size() : build_vocabulary(examples).size();
  out << "wrote " << examples.size() << " examples to " << f.out << ", vocabulary size " << vocab << '\n';
  return kExitOk;
}

TrainConfig train_config_from(const TrainFlags& f) {
  if (f.preset != "desk" && f.preset != "paper") throw UsageError("--preset must be desk or paper");
  TrainConfig c = (f.paper_scale || f.preset == "paper") ? TrainConfig::paper() : TrainConfig::desk();
  if (!f.alpha.empty()) {
    try {
      c.model.alpha = AlphaConfig::parse(f.alpha);
    } catch (const Error& e) {
      throw UsageError(std::string("--alpha: ") + e.what());
    }
  }
  c.seed = f.seed;
  if (f.epochs != 0) c.epochs = f.epochs;
  if (f.max_steps_set) c.max_steps = f.max_steps;
  if (f.batch_tokens != 0) c.batch_tokens = f.batch_tokens;
  if (f.lr > 0.0) c.schedule.peak = f.lr;
  if (f.warmup != 0) c.schedule.warmup = f.warmup;
  if (f.target_loss >= 0.0) c.target_loss = f.target_loss;
  c.model.literal_sqrt_d = f.literal_sqrt_d;
  c.threads = threads_from_env();
  return c;
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  const TrainConfig config = train_config_from(f);
  const auto dataset = read_dataset_file(f.data);
  if (dataset.empty()) throw UsageError("dataset " + f.data + " has no examples");
  std::ofstream log;
  if (!f.log.empty()) log = open_output(f.log);
  try {
    TrainResult result = train(config, dataset, [&](const EpochLog& e) {
      if (log.is_open()) log << epoch_log_json(e) << '\n' << std::flush;
    });
    for (const auto& w : result.warnings) err << "warning: " << w << '\n';
    write_checkpoint_file(f.checkpoint, result.params, result.vocab);
    const double loss = result.log.empty() ? 0.0 : result.log.back().loss;
    out << "trained " << result.steps << " steps over " << result.log.size() << " epochs, final loss " << loss
        << ", checkpoint " << f.checkpoint << '\n';
  } catch (const NanLossError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNanLoss;
  }
  return kExitOk;
}

int cmd_generate(const GenerateFlags& f, std::ostream& out, std::ostream& err) {
  if (f.beam == 0) throw UsageError("--beam must be at least 1");
  const Checkpoint ck = read_checkpoint_file(f.checkpoint);
  const auto dataset = read_dataset_file(f.data);
  const std::size_t max_len = std::min(f.max_len, ck.params.config.max_len);
  std::ofstream file = open_output(f.out);
  std::set<std::string> unknown;
  for (const auto& ex : dataset) {
    for (const auto& o : ex.graph.objects) {
      if (!ck.vocab.contains(normalize_label(o.label))) unknown.insert(o.label);
      for (const auto& a : o.attributes) {
        if (!ck.vocab.contains(normalize_label(a))) unknown.insert(a);
      }
    }
    for (const auto& r : ex.graph.relations) {
      if (!ck.vocab.contains(normalize_label(r.predicate))) unknown.insert(r.predicate);
    }
    const GraphInput graph = graph_input_from_raw(ex.graph, ck.vocab, ck.params.config.neighborhood);
    const Hypothesis hyp = f.greedy ? greedy_decode(ck.params, graph, max_len) : beam_search(ck.params, graph, f.beam, max_len);
    json tokens = json::array();
    for (int t : hyp.tokens) tokens.push_back(ck.vocab.token(t));
    file << json{{"graph_id", ex.id}, {"tokens", tokens}, {"log_prob", hyp.log_prob}, {"finished", hyp.finished}}.dump()
         << '\n';
    if (!hyp.finished) err << "warning: graph " << ex.id << " hit max-len " << max_len << " without EOS\n";
  }
  for (const auto& label : unknown) err << "warning: label \"" << label << "\" is not in the vocabulary, using <unk>\n";
  if (!file) throw Error("failed writing " + f.out);
  out << "decoded " << dataset.size() << " graphs to " << f.out << '\n';
  return kExitOk;
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const auto references = read_dataset_file(f.data);
  std::map<std::string, TokenList> generated;
  std::istringstream lines(read_file(f.generations));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string id = j.at("graph_id").get<std::string>();
      if (!generated.emplace(id, j.at("tokens").get<TokenList>()).second) {
        throw FormatError("duplicate graph_id \"" + id + "\"");
      }
    } catch (const json::exception& e) {
      throw FormatError(f.generations + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<TokenList> cands;
  std::vector<TokenList> refs;
  std::vector<std::vector<TokenList>> ref_sets;
  for (const auto& ex : references) {
    const auto it = generated.find(ex.id);
    if (it == generated.end()) throw UsageError("no generation for reference graph_id \"" + ex.id + "\"");
    cands.push_back(it->second);
    refs.push_back(tokenize(ex.paragraph));
    ref_sets.push_back({refs.back()});
    generated.erase(it);
  }
  if (!generated.empty()) throw UsageError("generation graph_id \"" + generated.begin()->first + "\" has no reference");
  if (cands.empty()) throw UsageError("nothing to evaluate");
  const LengthStats lengths = length_stats(cands);
  out << json{{"bleu4", bleu4(cands, refs)},
              {"cider", cider(cands, ref_sets)},
              {"avg_len", lengths.mean},
              {"std_len", lengths.stddev}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
  const Checkpoint ck = read_checkpoint_file(f.checkpoint);
  const ModelConfig& c = ck.params.config;
  json alphas = json::array();
  for (std::size_t l = 0; l < c.layers; ++l) {
    json row = json::array();
    for (std::size_t h = 0; h < c.heads; ++h) row.push_back(ck.params.head_alpha(l, h));
    alphas.push_back(row);
  }
  out << json{{"format_version", kCheckpointVersion},
              {"config", json::parse(model_config_json(c))},
              {"parameters", ck.params.parameter_count()},
              {"vocab_size", ck.vocab.size()},
              {"head_alpha", alphas}}
             .dump(2)
      << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse graph-to-sequence transformer: synthetic data, training, decoding and scoring."};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic graph/paragraph dataset as JSON lines");
  s->add_option("--count", synth.count, "Number of examples")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--first-index", synth.first_index, "Index of the first example")->capture_default_str();
  s->add_option("--pools", synth.pools, "JSON file with objects/attributes/relations label pools")
      ->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output dataset path")->required();

  TrainFlags train_flags;
  auto* t = app.add_subcommand("train", "Train a model and write a checkpoint");
  t->add_option("--data", train_flags.data, "Training dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  t->add_option("--checkpoint", train_flags.checkpoint, "Checkpoint output path")->required();
  t->add_option("--out", train_flags.checkpoint, "Alias of --checkpoint");
  t->add_option("--log", train_flags.log, "Per-epoch metrics log (JSON lines)");
  t->add_option("--preset", train_flags.preset, "desk or paper")->capture_default_str();
  t->add_flag("--paper-scale", train_flags.paper_scale, "Use the paper-scale preset (L=6, H=8, d=512)");
  t->add_option("--alpha", train_flags.alpha, "softmax, fixed:<v> or learned (default fixed:1.5)");
  t->add_option("--seed", train_flags.seed, "Initialization and shuffling seed")->capture_default_str();
  t->add_option("--epochs", train_flags.epochs, "Epoch limit (preset default when 0)");
  t->add_option("--max-steps", train_flags.max_steps, "Optimizer step limit, 0 for none")->each([&](const std::string&) {
    train_flags.max_steps_set = true;
  });
  t->add_option("--batch-tokens", train_flags.batch_tokens, "Target-token budget per batch");
  t->add_option("--lr", train_flags.lr, "Peak learning rate");
  t->add_option("--warmup", train_flags.warmup, "Warmup steps");
  t->add_option("--target-loss", train_flags.target_loss, "Stop once an epoch's mean token NLL reaches this");
  t->add_flag("--literal-sqrt-d", train_flags.literal_sqrt_d, "Scale head scores by 1/sqrt(d) instead of 1/sqrt(d_h)");

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "Decode every graph of a dataset");
  g->add_option("--checkpoint", gen.checkpoint, "Checkpoint to load")->required()->check(CLI::ExistingFile);
  g->add_option("--data", gen.data, "Dataset whose graphs are decoded")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Generations output (JSON lines)")->required();
  g->add_option("--beam", gen.beam, "Beam width")->capture_default_str();
  g->add_flag("--greedy", gen.greedy, "Greedy decoding instead of beam search");
  g->add_option("--max-len", gen.max_len, "Maximum generated tokens, EOS included")->capture_default_str();

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "Score generations against reference paragraphs");
  e->add_option("--generations", ev.generations, "Generations file from `generate`")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Reference dataset")->required()->check(CLI::ExistingFile);

  InspectFlags insp;
  auto* i = app.add_subcommand("inspect", "Print a checkpoint's configuration and head alphas");
  i->add_option("--checkpoint", insp.checkpoint, "Checkpoint to read")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train_flags, out, err);
    if (*g) return cmd_generate(gen, out, err);
    if (*e) return cmd_eval(ev, out);
    if (*i) return cmd_inspect(insp, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sgst
