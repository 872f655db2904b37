// codetwin: command-line workflows over the library.
//   synth -> build-vocab -> pretrain -> train -> evaluate / embed / heatmap

#include <Eigen/Core>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "codetwin/baseline.hpp"
#include "codetwin/corpus.hpp"
#include "codetwin/errors.hpp"
#include "codetwin/evalkit.hpp"
#include "codetwin/pretrain.hpp"
#include "codetwin/sbt.hpp"
#include "codetwin/siamese.hpp"
#include "codetwin/textio.hpp"
#include "codetwin/vocab.hpp"

#ifndef CODETWIN_VERSION
#define CODETWIN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace codetwin;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Options {
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // corpus selection
  std::string corpus;
  bool json = false;
  std::string split;
  double test_fraction = 1.0 / 6.0;

  std::string vocab;
  std::string model;
  std::string init;
  std::string out;
  std::string input;
  std::string roc_out = "roc.csv";
  std::string csv_out = "heatmap.csv";
  std::string pgm_out = "heatmap.pgm";

  std::size_t classes = 6;
  std::size_t per_class = 60;
  double coverage = kDefaultCoverage;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t epochs = 0;  // 0: module default
  std::size_t batch_size = 0;
  double learning_rate = 1e-3;
  std::size_t pairs_per_epoch = SiameseConfig{}.pairs_per_epoch;
  std::size_t eval_pairs = kDefaultEvalPairs;
  std::size_t per_class_cap = kDefaultPerClassCap;
};

// Selected part of the corpus given by --corpus/--split.
LabeledCorpus load_selected(const Options& o) {
  auto loaded = load_corpus(o.corpus, o.json);
  for (const auto& line : loaded.report) std::cerr << line << "\n";
  for (const auto& line : loaded.warnings) std::cerr << "warning: " << line << "\n";
  if (o.split == "all") return loaded.corpus;
  auto parts = split_corpus(loaded.corpus, o.test_fraction, nn::derive_seed(o.seed, "split"));
  return o.split == "train" ? parts.train : parts.test;
}

std::vector<SbtSequence> sequences_of(const LabeledCorpus& c) {
  std::vector<SbtSequence> out;
  for (const auto& cls : c.classes) {
    for (const auto& s : cls.solutions) out.push_back(sbt_serialize(s.tree));
  }
  return out;
}

// Reruns `load` so that a failure names the file it was reading.
template <class F>
auto from_file(const std::string& path, F load) {
  try {
    return load();
  } catch (const std::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

struct Model {
  Vocabulary vocab;
  ModelCheckpoint ckpt;
  nn::ParamStore<float> params;
};

Model load_model(const Options& o) {
  Model m;
  m.vocab = from_file(o.vocab, [&] { return load_vocab(o.vocab); });
  m.ckpt = from_file(o.model, [&] { return load_checkpoint(o.model, vocab_fingerprint(m.vocab)); });
  m.params = trainable_params(m.ckpt);
  return m;
}

Embedder model_embedder(const Model& m) {
  return [&m](const AstNode& t) {
    auto v = encode(m.params, m.ckpt.config, encode_sequence(m.vocab, sbt_serialize(t), m.ckpt.config.max_len));
    return std::vector<double>(v.begin(), v.end());
  };
}

void write_roc(const Options& o, const ScoredPairs& sp) {
  auto roc = roc_curve(sp);
  write_file(o.roc_out, roc_to_csv(roc));
  std::cout << "AUC " << format_double(roc.auc) << "\n";
}

// --- subcommands ---------------------------------------------------------

void cmd_synth(const Options& o) {
  const auto sources = synthesize_sources(o.classes, o.per_class, o.seed);
  for (const auto& s : sources) {
    const fs::path dir = fs::path(o.out) / s.label;
    fs::create_directories(dir);
    write_file((dir / (s.id + ".py")).string(), s.source);
  }
  std::cerr << "wrote " << sources.size() << " solutions to " << o.out << "\n";
}

void cmd_build_vocab(const Options& o) {
  const auto corpus = load_selected(o);
  const auto vocab = build_vocab(count_tokens(sequences_of(corpus)), o.coverage);
  save_vocab(vocab, o.out);
  std::cerr << "vocab: " << vocab.size() << " ids, coverage " << format_double(vocab.achieved_coverage()) << "\n";
}

void cmd_pretrain(const Options& o) {
  const auto vocab = from_file(o.vocab, [&] { return load_vocab(o.vocab); });
  const auto corpus = load_selected(o);
  const EncoderConfig cfg{vocab.size(), o.embed_dim, o.hidden_dim, o.max_len};
  cfg.validate();
  PretrainConfig pc;
  if (o.epochs) pc.epochs = o.epochs;
  if (o.batch_size) pc.batch_size = o.batch_size;
  pc.learning_rate = o.learning_rate;
  pc.seed = o.seed;
  pc.validate();

  std::vector<IdSequence> ids;
  for (const auto& s : sequences_of(corpus)) ids.push_back(encode_sequence(vocab, s, cfg.max_len));
  nn::ParamStore<float> params;
  nn::Rng init_rng(nn::derive_seed(o.seed, "init"));
  init_encoder(params, cfg, init_rng);
  init_decoder(params, cfg, init_rng);
  nn::Rng rng(nn::derive_seed(o.seed, "pretrain"));
  for (std::size_t e = 0; e < pc.epochs; ++e) {
    auto r = pretrain_epoch(params, cfg, pc, ids, rng, o.threads);
    std::cerr << "pretrain epoch " << e + 1 << "/" << pc.epochs << " loss " << format_double(r.mean_loss) << "\n";
  }
  std::cerr << "reconstruction accuracy " << format_double(reconstruction_accuracy(params, cfg, ids)) << "\n";
  save_checkpoint(make_checkpoint(strip_decoder(params), cfg, vocab_fingerprint(vocab)), o.out);
}

void cmd_train(const Options& o) {
  const auto vocab = from_file(o.vocab, [&] { return load_vocab(o.vocab); });
  const auto corpus = load_selected(o);
  EncoderConfig cfg{vocab.size(), o.embed_dim, o.hidden_dim, o.max_len};
  nn::ParamStore<float> params;
  if (!o.init.empty()) {
    const auto ckpt = from_file(o.init, [&] { return load_checkpoint(o.init, vocab_fingerprint(vocab)); });
    cfg = ckpt.config;
    params = trainable_params(ckpt);
  } else {
    cfg.validate();
    nn::Rng init_rng(nn::derive_seed(o.seed, "init"));
    init_encoder(params, cfg, init_rng);
    init_calibration(params);
  }
  SiameseConfig sc;
  if (o.epochs) sc.epochs = o.epochs;
  if (o.batch_size) sc.batch_size = o.batch_size;
  sc.learning_rate = o.learning_rate;
  sc.pairs_per_epoch = o.pairs_per_epoch;
  sc.seed = o.seed;
  sc.validate();

  std::vector<std::vector<IdSequence>> classes;
  for (const auto& cls : corpus.classes) {
    classes.emplace_back();
    for (const auto& s : cls.solutions) classes.back().push_back(encode_sequence(vocab, sbt_serialize(s.tree), cfg.max_len));
  }
  nn::Rng rng(nn::derive_seed(o.seed, "siamese"));
  for (std::size_t e = 0; e < sc.epochs; ++e) {
    auto r = train_epoch(params, cfg, sc, sample_pairs(classes, sc.pairs_per_epoch, rng), rng, o.threads);
    const auto cal = get_calibration(params);
    std::cerr << "train epoch " << e + 1 << "/" << sc.epochs << " loss " << format_double(r.mean_loss) << " w "
              << format_double(cal.w) << " b " << format_double(cal.b) << "\n";
  }
  save_checkpoint(make_checkpoint(params, cfg, vocab_fingerprint(vocab)), o.out);
}

void cmd_embed(const Options& o) {
  const auto m = load_model(o);
  const AstNode tree = from_file(o.input, [&] { return wrap_in_function(parse_source(read_file(o.input)), "solution"); });
  for (double v : model_embedder(m)(tree)) std::cout << format_double(v) << "\n";
}

void cmd_evaluate(const Options& o) {
  const auto m = load_model(o);
  const auto corpus = load_selected(o);
  nn::Rng rng(nn::derive_seed(o.seed, "eval"));
  write_roc(o, score_pairs(model_embedder(m), corpus, o.eval_pairs, rng, o.threads));
}

void cmd_baseline_evaluate(const Options& o) {
  const auto vocab = from_file(o.vocab, [&] { return load_vocab(o.vocab); });
  const auto corpus = load_selected(o);
  Embedder bag = [&](const AstNode& t) { return histogram_as_vector(bag_of_tokens(vocab, sbt_serialize(t))); };
  nn::Rng rng(nn::derive_seed(o.seed, "eval"));
  write_roc(o, score_pairs(bag, corpus, o.eval_pairs, rng, o.threads));
}

void cmd_heatmap(const Options& o) {
  const auto m = load_model(o);
  const auto corpus = load_selected(o);
  nn::Rng rng(nn::derive_seed(o.seed, "heatmap"));
  const auto dm = distance_matrix(model_embedder(m), corpus, o.per_class_cap, rng, o.threads);
  write_file(o.csv_out, matrix_to_csv(dm));
  write_file(o.pgm_out, matrix_to_pgm(dm));
  std::cerr << "heatmap: " << dm.d.size() << " rows\n";
}

// --- option wiring -------------------------------------------------------

void common(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Root seed; every RNG derives from it")->capture_default_str();
  sub->add_option("--threads", o.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

// --split defaults to "train" for fitting and "test" for scoring.
void corpus_opts(CLI::App* sub, Options& o) {
  sub->add_option("--corpus", o.corpus, "Corpus root: <root>/<class>/<id>.py")->required()->check(CLI::ExistingDirectory);
  sub->add_flag("--json", o.json, "Read <id>.ast.json files instead of sources");
  sub->add_option("--split", o.split, "Corpus part: all, train or test")->check(CLI::IsMember({"all", "train", "test"}));
  sub->add_option("--test-fraction", o.test_fraction, "Per-class test share when --split is train or test")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
}

void vocab_in(CLI::App* sub, Options& o) {
  sub->add_option("--vocab", o.vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
}

void model_in(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  vocab_in(sub, o);
}

void out_file(CLI::App* sub, std::string& target, const std::string& flag, const std::string& help, bool required) {
  auto* opt = sub->add_option(flag, target, help);
  if (required) opt->required();
  else opt->capture_default_str();
}

void encoder_dims(CLI::App* sub, Options& o) {
  sub->add_option("--embed-dim", o.embed_dim, "Token embedding size")->capture_default_str();
  sub->add_option("--hidden-dim", o.hidden_dim, "LSTM hidden size")->capture_default_str();
  sub->add_option("--max-len", o.max_len, "Maximum encoded sequence length")->capture_default_str();
}

// Output paths must have an existing parent directory.
std::optional<std::string> check_output(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) return "output directory '" + parent.string() + "' does not exist";
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Code clone similarity via structure-based traversal and a Siamese LSTM encoder", "codetwin"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", std::string(CODETWIN_VERSION));
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  common(synth, o);
  synth->add_option("--classes", o.classes, "Number of classes")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--per-class", o.per_class, "Solutions per class")->capture_default_str()->check(CLI::PositiveNumber);
  out_file(synth, o.out, "--out", "Output directory", true);

  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "Build the token vocabulary from a corpus");
  common(build_vocab_cmd, o);
  corpus_opts(build_vocab_cmd, o);
  build_vocab_cmd->add_option("--coverage", o.coverage, "Token coverage target")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  out_file(build_vocab_cmd, o.out, "--out", "Vocabulary file to write", true);

  auto* pretrain = app.add_subcommand("pretrain", "Autoencoder pre-training of the encoder");
  common(pretrain, o);
  corpus_opts(pretrain, o);
  vocab_in(pretrain, o);
  encoder_dims(pretrain, o);
  pretrain->add_option("--epochs", o.epochs, "Epochs (default " + std::to_string(PretrainConfig{}.epochs) + ")");
  pretrain->add_option("--batch-size", o.batch_size,
                       "Sequences per Adam step (default " + std::to_string(PretrainConfig{}.batch_size) + ")");
  pretrain->add_option("--lr", o.learning_rate, "Adam learning rate")->capture_default_str();
  out_file(pretrain, o.out, "--out", "Encoder checkpoint to write", true);

  auto* train = app.add_subcommand("train", "Siamese training on labeled pairs");
  common(train, o);
  corpus_opts(train, o);
  vocab_in(train, o);
  encoder_dims(train, o);
  train->add_option("--init", o.init, "Start from this checkpoint instead of random weights")->check(CLI::ExistingFile);
  train->add_option("--epochs", o.epochs, "Epochs (default " + std::to_string(SiameseConfig{}.epochs) + ")");
  train->add_option("--batch-size", o.batch_size,
                    "Pairs per Adam step (default " + std::to_string(SiameseConfig{}.batch_size) + ")");
  train->add_option("--pairs", o.pairs_per_epoch, "Pairs sampled per epoch")->capture_default_str();
  train->add_option("--lr", o.learning_rate, "Adam learning rate")->capture_default_str();
  out_file(train, o.out, "--out", "Model checkpoint to write", true);

  auto* embed = app.add_subcommand("embed", "Print the embedding of one source file, one value per line");
  common(embed, o);
  model_in(embed, o);
  embed->add_option("--input", o.input, "Source file")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Pair AUC of a trained model; writes the ROC curve");
  common(evaluate, o);
  model_in(evaluate, o);
  corpus_opts(evaluate, o);
  evaluate->add_option("--pairs", o.eval_pairs, "Evaluation pairs")->capture_default_str();
  out_file(evaluate, o.roc_out, "--roc-out", "ROC CSV to write", false);

  auto* baseline = app.add_subcommand("baseline-evaluate", "Pair AUC of the bag-of-tokens baseline");
  common(baseline, o);
  vocab_in(baseline, o);
  corpus_opts(baseline, o);
  baseline->add_option("--pairs", o.eval_pairs, "Evaluation pairs")->capture_default_str();
  out_file(baseline, o.roc_out, "--roc-out", "ROC CSV to write", false);

  auto* heatmap = app.add_subcommand("heatmap", "Pairwise embedding distances as CSV and PGM");
  common(heatmap, o);
  model_in(heatmap, o);
  corpus_opts(heatmap, o);
  heatmap->add_option("--per-class-cap", o.per_class_cap, "Solutions per class")->capture_default_str();
  out_file(heatmap, o.csv_out, "--csv-out", "Matrix CSV to write", false);
  out_file(heatmap, o.pgm_out, "--pgm-out", "PGM image to write", false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->get_option_no_throw("--split") == nullptr || sub->count("--split") == 0) {
    o.split = (sub == build_vocab_cmd || sub == pretrain || sub == train) ? "train" : "test";
  }
  for (const std::string* path : {&o.out, &o.roc_out, &o.csv_out, &o.pgm_out}) {
    if (sub == synth && path == &o.out) continue;
    if (auto problem = check_output(*path)) {
      std::cerr << "codetwin " << sub->get_name() << ": " << *problem << "\n" << sub->help();
      return kExitUsage;
    }
  }

  std::cerr << "codetwin " << CODETWIN_VERSION << " (Eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
            << EIGEN_MINOR_VERSION << ", CLI11 " << CLI11_VERSION << ")\n"
            << "subcommand " << sub->get_name() << " seed " << o.seed << " threads " << o.threads << "\n"
            << sub->config_to_str(true, false);

  try {
    if (sub == synth) cmd_synth(o);
    else if (sub == build_vocab_cmd) cmd_build_vocab(o);
    else if (sub == pretrain) cmd_pretrain(o);
    else if (sub == train) cmd_train(o);
    else if (sub == embed) cmd_embed(o);
    else if (sub == evaluate) cmd_evaluate(o);
    else if (sub == baseline) cmd_baseline_evaluate(o);
    else if (sub == heatmap) cmd_heatmap(o);
  } catch (const std::exception& e) {
    std::cerr << "codetwin " << sub->get_name() << ": error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
