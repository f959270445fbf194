// tinyalign command line: baseline alignment, fine-tuning, evaluation,
// corpus-size sweeps and similarity heatmaps over parallel corpora.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tinyalign/tinyalign.hpp"

namespace ta = tinyalign;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args);

struct EmbeddingArgs {
  std::string src_emb;
  std::string tgt_emb;
  std::size_t emb_limit = 0;  // 0 = no limit

  std::optional<std::size_t> limit() const {
    return emb_limit ? std::optional<std::size_t>(emb_limit) : std::nullopt;
  }
};

ta::EmbeddingStore load_store(const EmbeddingArgs& emb) {
  ta::EmbeddingStore store = ta::load_embeddings(
      emb.src_emb, std::string(ta::kSourceLanguage), emb.limit());
  ta::load_embeddings_into(store, emb.tgt_emb,
                           std::string(ta::kTargetLanguage), emb.limit());
  return store;
}

ta::Symmetrization parse_sym(const std::string& name) {
  return name == "gdfa" ? ta::Symmetrization::Gdfa
                        : ta::Symmetrization::Intersection;
}

struct TrainArgs {
  std::size_t iterations = 500;
  double lr = 0.001;
  double tau = 0.001;
  double alpha = 1.0;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  std::string positions = "on";
  double position_scale = 1.0;

  ta::TrainConfig config() const {
    ta::TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.learning_rate = lr;
    cfg.dropout_rate = dropout;
    cfg.seed = seed;
    cfg.objective.tau = tau;
    cfg.objective.alpha = alpha;
    cfg.objective.use_positions = positions == "on";
    cfg.objective.position_scale = position_scale;
    return cfg;
  }
};

void add_train_flags(CLI::App* cmd, TrainArgs& train) {
  cmd->add_option("--iterations", train.iterations,
                  "Fine-tuning iterations (full-batch passes)")
      ->default_val(500);
  cmd->add_option("--lr", train.lr, "Adam learning rate")->default_val(0.001);
  cmd->add_option("--tau", train.tau, "Softmax temperature")
      ->default_val(0.001);
  cmd->add_option("--alpha", train.alpha, "Retention loss weight")
      ->default_val(1.0);
  cmd->add_option("--dropout", train.dropout,
                  "Embedding dropout rate in [0,1)")
      ->default_val(0.5);
  cmd->add_option("--seed", train.seed, "Random seed")->default_val(0);
  cmd->add_option("--positions", train.positions,
                  "Add sinusoid position vectors inside the objective")
      ->check(CLI::IsMember({"on", "off"}))
      ->default_val("on");
  cmd->add_option("--position-scale", train.position_scale,
                  "Multiplier on the position sinusoids")
      ->default_val(1.0);
}

void add_embedding_flags(CLI::App* cmd, EmbeddingArgs& emb) {
  cmd->add_option("--src-emb", emb.src_emb,
                  "Source embeddings (word2vec text format)")
      ->required();
  cmd->add_option("--tgt-emb", emb.tgt_emb,
                  "Target embeddings (word2vec text format)")
      ->required();
  cmd->add_option("--emb-limit", emb.emb_limit,
                  "Load at most this many rows per embedding file");
}

void write_run_manifest(const std::string& primary_output,
                        const std::string& command,
                        const std::vector<std::string>& argv,
                        const std::vector<std::string>& input_paths,
                        const std::vector<std::string>& output_paths,
                        std::uint64_t seed) {
  ta::RunManifest manifest;
  manifest.command = command;
  manifest.argv = argv;
  manifest.seed = seed;
  for (const std::string& path : input_paths) {
    manifest.inputs[path] = ta::file_digest(path);
  }
  manifest.outputs = output_paths;
  ta::write_manifest(primary_output + ".manifest.json", manifest);
}

// ---- align ----------------------------------------------------------------

struct AlignArgs {
  EmbeddingArgs emb;
  std::string corpus;
  std::string sym = "intersection";
  std::string out;
};

void run_align(const AlignArgs& args, const std::vector<std::string>& argv) {
  const ta::ParallelCorpus corpus = ta::read_parallel_corpus(args.corpus);
  const ta::EmbeddingStore store = load_store(args.emb);
  const std::vector<ta::Alignment> alignments =
      ta::align_corpus(store, corpus, parse_sym(args.sym));
  ta::write_alignments(fs::path(args.out), alignments);
  write_run_manifest(args.out, "align", argv,
                     {args.emb.src_emb, args.emb.tgt_emb, args.corpus},
                     {args.out}, 0);
}

// ---- finetune ---------------------------------------------------------------

struct FinetuneArgs {
  AlignArgs align;
  TrainArgs train;
  std::string save_emb;  // prefix; empty = do not save
  bool timings = false;
};

void run_finetune(const FinetuneArgs& args,
                  const std::vector<std::string>& argv) {
  const ta::ParallelCorpus corpus =
      ta::read_parallel_corpus(args.align.corpus);
  ta::EmbeddingStore store = load_store(args.align.emb);
  const ta::TrainConfig config = args.train.config();
  const ta::TrainingTrace trace = ta::finetune(store, corpus, config);

  // Alignment always uses the plain word vectors, never the position
  // sinusoids.
  const std::vector<ta::Alignment> alignments =
      ta::align_corpus(store, corpus, parse_sym(args.align.sym));
  ta::write_alignments(fs::path(args.align.out), alignments);

  const std::string trace_path = args.align.out + ".trace";
  {
    std::ofstream out(trace_path);
    if (!out) throw ta::IoError("cannot write " + trace_path);
    ta::write_trace(out, trace, args.timings);
  }
  std::vector<std::string> outputs = {args.align.out, trace_path};
  if (!args.save_emb.empty()) {
    const std::string src_path = args.save_emb + ".src.vec";
    const std::string tgt_path = args.save_emb + ".tgt.vec";
    store.save_word2vec(fs::path(src_path),
                        std::string(ta::kSourceLanguage));
    store.save_word2vec(fs::path(tgt_path),
                        std::string(ta::kTargetLanguage));
    outputs.push_back(src_path);
    outputs.push_back(tgt_path);
  }
  write_run_manifest(
      args.align.out, "finetune", argv,
      {args.align.emb.src_emb, args.align.emb.tgt_emb, args.align.corpus},
      outputs, args.train.seed);
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string pred;
  std::string gold;
  std::string corpus;
  std::string out;  // optional report file
};

void run_evaluate(const EvaluateArgs& args,
                  const std::vector<std::string>& argv) {
  const std::vector<ta::Alignment> predicted = ta::read_alignments(args.pred);
  const std::vector<ta::GoldAlignment> gold =
      ta::read_gold_alignments(args.gold);
  const ta::ParallelCorpus corpus = ta::read_parallel_corpus(args.corpus);

  const ta::GoldValidationReport validation = ta::validate_gold(corpus, gold);
  if (validation.count_mismatch) {
    std::cerr << "warning: corpus has " << validation.count_mismatch->first
              << " pairs but gold file has "
              << validation.count_mismatch->second << " lines\n";
  }
  for (const ta::GoldValidationIssue& issue : validation.out_of_range) {
    std::cerr << "warning: pair " << issue.pair_id << ": gold link "
              << issue.link.first << '-' << issue.link.second
              << " outside sentence lengths " << issue.source_length << 'x'
              << issue.target_length << '\n';
  }

  const ta::EvalResult result = ta::evaluate(predicted, gold);
  ta::write_eval_report(std::cout, result);
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw ta::IoError("cannot write " + args.out);
    ta::write_eval_report(out, result);
    write_run_manifest(args.out, "evaluate", argv,
                       {args.pred, args.gold, args.corpus}, {args.out}, 0);
  }
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  EmbeddingArgs emb;
  std::string corpus;
  std::string gold;
  std::string sym = "intersection";
  std::string sizes;
  TrainArgs train;
  std::string out;  // optional; table always goes to stdout
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    const auto value = ta::detail::parse_index(token);
    if (!value || *value == 0) {
      throw ta::UsageError("bad size '" + token + "' in --sizes");
    }
    sizes.push_back(*value);
  }
  if (sizes.empty()) throw ta::UsageError("--sizes is empty");
  return sizes;
}

void run_sweep(const SweepArgs& args, const std::vector<std::string>& argv) {
  const std::vector<std::size_t> sizes = parse_sizes(args.sizes);
  const ta::ParallelCorpus corpus = ta::read_parallel_corpus(args.corpus);
  const std::vector<ta::GoldAlignment> gold =
      ta::read_gold_alignments(args.gold);
  const ta::EmbeddingStore pristine = load_store(args.emb);
  const ta::Symmetrization sym = parse_sym(args.sym);

  std::ostringstream table;
  table << "size\tmethod\tprecision\trecall\tf1\taer\n";
  char buf[160];
  auto emit = [&](std::size_t size, const char* method,
                  const ta::EvalResult& result) {
    std::snprintf(buf, sizeof(buf), "%zu\t%s\t%.6f\t%.6f\t%.6f\t%.6f\n", size,
                  method, result.precision, result.recall, result.f1,
                  result.aer);
    table << buf;
  };

  for (const std::size_t size : sizes) {
    if (size > corpus.size() || size > gold.size()) {
      throw ta::ShapeError("sweep size " + std::to_string(size) +
                           " exceeds corpus length " +
                           std::to_string(std::min(corpus.size(),
                                                   gold.size())));
    }
    ta::ParallelCorpus prefix;
    prefix.pairs.assign(corpus.pairs.begin(),
                        corpus.pairs.begin() + static_cast<long>(size));
    const std::vector<ta::GoldAlignment> gold_prefix(
        gold.begin(), gold.begin() + static_cast<long>(size));

    const std::vector<ta::Alignment> baseline =
        ta::align_corpus(pristine, prefix, sym);
    emit(size, "baseline", ta::evaluate(baseline, gold_prefix));

    ta::EmbeddingStore tuned = pristine;
    ta::finetune(tuned, prefix, args.train.config());
    const std::vector<ta::Alignment> finetuned =
        ta::align_corpus(tuned, prefix, sym);
    emit(size, "finetuned", ta::evaluate(finetuned, gold_prefix));
  }

  std::cout << table.str();
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw ta::IoError("cannot write " + args.out);
    out << table.str();
    write_run_manifest(
        args.out, "sweep", argv,
        {args.emb.src_emb, args.emb.tgt_emb, args.corpus, args.gold},
        {args.out}, args.train.seed);
  }
}

// ---- heatmap ----------------------------------------------------------------

struct HeatmapArgs {
  std::string corpus;
  std::size_t pair_index = 0;
  std::vector<std::string> before_emb;  // src tgt
  std::vector<std::string> after_emb;   // src tgt
  std::string gold;
  std::string sym = "intersection";
  std::string out;
  std::size_t cell_size = 24;
  std::size_t emb_limit = 0;
};

void render_one(const HeatmapArgs& args, const ta::SentencePair& pair,
                const std::vector<std::string>& emb_paths,
                const ta::GoldAlignment* gold_pair,
                const std::string& out_path,
                std::vector<std::string>& inputs,
                std::vector<std::string>& outputs) {
  EmbeddingArgs emb;
  emb.src_emb = emb_paths[0];
  emb.tgt_emb = emb_paths[1];
  emb.emb_limit = args.emb_limit;
  const ta::EmbeddingStore store = load_store(emb);
  const ta::SimilarityMatrix sim = ta::similarity_matrix(store, pair);
  const ta::Alignment fwd =
      ta::directional_align(sim, ta::Direction::SourceToTarget);
  const ta::Alignment bwd =
      ta::directional_align(sim, ta::Direction::TargetToSource);
  const ta::Alignment dots = ta::symmetrize(
      fwd, bwd, pair.source.size(), pair.target.size(), parse_sym(args.sym));
  ta::HeatmapOptions options;
  options.cell_size = args.cell_size;
  const ta::RgbImage image =
      ta::render_similarity_heatmap(sim, dots, gold_pair, options);
  ta::write_ppm(fs::path(out_path), image);
  inputs.push_back(emb_paths[0]);
  inputs.push_back(emb_paths[1]);
  outputs.push_back(out_path);
}

void run_heatmap(const HeatmapArgs& args,
                 const std::vector<std::string>& argv) {
  if (args.before_emb.empty() && args.after_emb.empty()) {
    throw ta::UsageError("need --before-emb and/or --after-emb");
  }
  const ta::ParallelCorpus corpus = ta::read_parallel_corpus(args.corpus);
  if (args.pair_index >= corpus.size()) {
    throw ta::ShapeError("pair index " + std::to_string(args.pair_index) +
                         " out of range; corpus has " +
                         std::to_string(corpus.size()) + " pairs");
  }
  const ta::SentencePair& pair = corpus.pairs[args.pair_index];

  std::optional<ta::GoldAlignment> gold_pair;
  if (!args.gold.empty()) {
    const std::vector<ta::GoldAlignment> gold =
        ta::read_gold_alignments(args.gold);
    if (args.pair_index >= gold.size()) {
      throw ta::ShapeError("pair index " + std::to_string(args.pair_index) +
                           " out of range; gold file has " +
                           std::to_string(gold.size()) + " lines");
    }
    gold_pair = gold[args.pair_index];
  }

  std::vector<std::string> inputs = {args.corpus};
  if (!args.gold.empty()) inputs.push_back(args.gold);
  std::vector<std::string> outputs;
  const bool both = !args.before_emb.empty() && !args.after_emb.empty();
  if (!args.before_emb.empty()) {
    render_one(args, pair, args.before_emb,
               gold_pair ? &*gold_pair : nullptr,
               both ? args.out + ".before.ppm" : args.out, inputs, outputs);
  }
  if (!args.after_emb.empty()) {
    render_one(args, pair, args.after_emb, gold_pair ? &*gold_pair : nullptr,
               both ? args.out + ".after.ppm" : args.out, inputs, outputs);
  }
  const std::string labels_path = args.out + ".labels.txt";
  ta::write_heatmap_labels(fs::path(labels_path), pair);
  outputs.push_back(labels_path);
  write_run_manifest(args.out, "heatmap", argv, inputs, outputs, 0);
}

// ---- replay -----------------------------------------------------------------

void run_replay(const std::string& manifest_path) {
  const ta::RunManifest manifest = ta::read_manifest(manifest_path);
  for (const auto& [path, digest] : manifest.inputs) {
    const std::string current = ta::file_digest(path);
    if (current != digest) {
      throw ta::FormatError("input " + path + " changed since the manifest "
                            "was written (" + current + " vs " + digest +
                            ")");
    }
  }
  const int code = run_cli(manifest.argv);
  if (code != 0) throw ta::Error("replayed command failed");
}

// ---- dispatch ---------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Word alignment for tiny parallel corpora via cross-lingual "
               "embeddings and monogamy fine-tuning"};
  app.set_version_flag("--version", std::string(ta::kVersion));
  app.require_subcommand(1);

  AlignArgs align_args;
  CLI::App* align_cmd = app.add_subcommand(
      "align", "Baseline alignment from embedding cosine similarity");
  add_embedding_flags(align_cmd, align_args.emb);
  align_cmd->add_option("--corpus", align_args.corpus, "Parallel corpus file")
      ->required();
  align_cmd->add_option("--sym", align_args.sym, "Symmetrization heuristic")
      ->check(CLI::IsMember({"intersection", "gdfa"}))
      ->default_val("intersection");
  align_cmd->add_option("--out", align_args.out, "Alignment output file")
      ->required();

  FinetuneArgs finetune_args;
  CLI::App* finetune_cmd = app.add_subcommand(
      "finetune", "Fine-tune embeddings on the corpus, then align");
  add_embedding_flags(finetune_cmd, finetune_args.align.emb);
  finetune_cmd
      ->add_option("--corpus", finetune_args.align.corpus,
                   "Parallel corpus file")
      ->required();
  finetune_cmd
      ->add_option("--sym", finetune_args.align.sym,
                   "Symmetrization heuristic")
      ->check(CLI::IsMember({"intersection", "gdfa"}))
      ->default_val("intersection");
  finetune_cmd
      ->add_option("--out", finetune_args.align.out, "Alignment output file")
      ->required();
  add_train_flags(finetune_cmd, finetune_args.train);
  finetune_cmd->add_option(
      "--save-emb", finetune_args.save_emb,
      "Write updated embeddings to <prefix>.src.vec and <prefix>.tgt.vec");
  finetune_cmd->add_flag("--timings", finetune_args.timings,
                         "Record wall-clock seconds in the trace file");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate_cmd = app.add_subcommand(
      "evaluate", "Score predicted alignments against gold links");
  evaluate_cmd
      ->add_option("--pred", evaluate_args.pred, "Predicted alignment file")
      ->required();
  evaluate_cmd->add_option("--gold", evaluate_args.gold, "Gold alignment file")
      ->required();
  evaluate_cmd
      ->add_option("--corpus", evaluate_args.corpus,
                   "Parallel corpus file (for validation)")
      ->required();
  evaluate_cmd->add_option("--out", evaluate_args.out,
                           "Also write the report to this file");

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Baseline and fine-tuned scores over corpus prefixes");
  add_embedding_flags(sweep_cmd, sweep_args.emb);
  sweep_cmd->add_option("--corpus", sweep_args.corpus, "Parallel corpus file")
      ->required();
  sweep_cmd->add_option("--gold", sweep_args.gold, "Gold alignment file")
      ->required();
  sweep_cmd->add_option("--sym", sweep_args.sym, "Symmetrization heuristic")
      ->check(CLI::IsMember({"intersection", "gdfa"}))
      ->default_val("intersection");
  sweep_cmd
      ->add_option("--sizes", sweep_args.sizes,
                   "Comma-separated corpus prefix sizes, e.g. 25,50,100")
      ->required();
  add_train_flags(sweep_cmd, sweep_args.train);
  sweep_cmd->add_option("--out", sweep_args.out,
                        "Also write the table to this file");

  HeatmapArgs heatmap_args;
  CLI::App* heatmap_cmd = app.add_subcommand(
      "heatmap", "Render similarity matrices for one pair as PPM images");
  heatmap_cmd
      ->add_option("--corpus", heatmap_args.corpus, "Parallel corpus file")
      ->required();
  heatmap_cmd
      ->add_option("--pair-index", heatmap_args.pair_index,
                   "0-based pair index")
      ->required();
  heatmap_cmd
      ->add_option("--before-emb", heatmap_args.before_emb,
                   "Source and target embedding files before fine-tuning")
      ->expected(2);
  heatmap_cmd
      ->add_option("--after-emb", heatmap_args.after_emb,
                   "Source and target embedding files after fine-tuning")
      ->expected(2);
  heatmap_cmd->add_option("--gold", heatmap_args.gold,
                          "Gold alignment file for the overlay");
  heatmap_cmd
      ->add_option("--sym", heatmap_args.sym,
                   "Symmetrization for the red link overlay")
      ->check(CLI::IsMember({"intersection", "gdfa"}))
      ->default_val("intersection");
  heatmap_cmd->add_option("--out", heatmap_args.out, "Output image path")
      ->required();
  heatmap_cmd->add_option("--cell-size", heatmap_args.cell_size,
                          "Cell size in pixels")
      ->default_val(24);
  heatmap_cmd->add_option("--emb-limit", heatmap_args.emb_limit,
                          "Load at most this many rows per embedding file");

  std::string replay_manifest;
  CLI::App* replay_cmd = app.add_subcommand(
      "replay", "Re-run the command recorded in a manifest");
  replay_cmd
      ->add_option("--manifest", replay_manifest, "Manifest JSON file")
      ->required();

  try {
    // CLI11's vector overload consumes the arguments back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (align_cmd->parsed()) {
      run_align(align_args, args);
    } else if (finetune_cmd->parsed()) {
      run_finetune(finetune_args, args);
    } else if (evaluate_cmd->parsed()) {
      run_evaluate(evaluate_args, args);
    } else if (sweep_cmd->parsed()) {
      run_sweep(sweep_args, args);
    } else if (heatmap_cmd->parsed()) {
      run_heatmap(heatmap_args, args);
    } else if (replay_cmd->parsed()) {
      run_replay(replay_manifest);
    }
  } catch (const ta::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ta::NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ta::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ta::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(argc > 1 ? argc - 1 : 0);
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run_cli(args);
}
