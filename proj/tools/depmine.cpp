#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "depmine/corpus.hpp"
#include "depmine/dependence.hpp"
#include "depmine/experiments.hpp"
#include "depmine/masking.hpp"
#include "depmine/mlm.hpp"
#include "depmine/parsing.hpp"

namespace fs = std::filesystem;
using namespace depmine;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

/// One whitespace-tokenized sentence per non-empty line.
std::vector<corpus::Text> read_text(const fs::path& p) {
  std::vector<corpus::Text> out;
  std::istringstream in(read_all(p));
  for (std::string line; std::getline(in, line);) {
    auto words = split_words(line);
    if (!words.empty()) out.push_back(corpus::Text::from_words(std::move(words)));
  }
  return out;
}

/// "<label>\t<sentence>" per line.
std::vector<corpus::LabeledExample> read_labeled(const fs::path& p) {
  std::vector<corpus::LabeledExample> out;
  std::istringstream in(read_all(p));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw corpus::ParseError("expected <label>\\t<sentence>", line_no);
    out.push_back({corpus::Text::from_words(split_words(line.substr(tab + 1))), std::stoi(line.substr(0, tab))});
  }
  return out;
}

void write_vocab(const fs::path& p, const corpus::Vocab& vocab) {
  std::ofstream out(p);
  for (const auto& t : vocab.tokens()) out << t << '\n';
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

corpus::Vocab read_vocab(const fs::path& p) {
  corpus::Vocab vocab;
  std::istringstream in(read_all(p));
  std::size_t k = 0;
  for (std::string line; std::getline(in, line); ++k) {
    if (k >= static_cast<std::size_t>(corpus::Vocab::kNumSpecials)) vocab.add(line);
  }
  return vocab;
}

fs::path vocab_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".vocab"); }

corpus::Vocab vocab_for(const fs::path& checkpoint, std::uint64_t expected_hash) {
  corpus::Vocab vocab = read_vocab(vocab_path(checkpoint));
  if (vocab.hash() != expected_hash) throw std::runtime_error("vocabulary file does not match checkpoint");
  return vocab;
}

std::vector<mlm::LabeledIds> to_ids(const corpus::Vocab& vocab, const std::vector<corpus::LabeledExample>& xs) {
  std::vector<mlm::LabeledIds> out;
  for (const auto& x : xs) {
    mlm::LabeledIds item;
    item.ids.push_back(corpus::Vocab::kCls);
    for (const auto& w : x.text.surface) item.ids.push_back(vocab.id_of(w));
    item.label = x.label;
    out.push_back(std::move(item));
  }
  return out;
}

struct ExperimentArgs {
  fs::path config;
  fs::path out;
  std::string seeds;
  bool quiet = false;
};

void add_experiment(CLI::App& app, const std::string& name, const std::string& help, ExperimentArgs& args) {
  auto* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", args.out, "output directory")->required();
  sub->add_option("--seeds", args.seeds, "seed list, e.g. 0..9 or 1,4,7 (overrides the config)");
  sub->add_flag("--quiet", args.quiet, "suppress progress lines");
}

int run_experiment(const std::string& name, const ExperimentArgs& args) {
  auto cfg = experiments::load_config(args.config);
  if (cfg.experiment.empty()) cfg.experiment = name;
  if (cfg.experiment != name) {
    throw std::invalid_argument("config is for '" + cfg.experiment + "', not '" + name + "'");
  }
  if (!args.seeds.empty()) cfg.seeds = experiments::parse_seeds(args.seeds);
  cfg.validate();
  experiments::Progress progress;
  if (!args.quiet) progress = [](const std::string& msg) { std::cerr << msg << '\n'; };

  if (name == "case-study") {
    experiments::emit_outputs(experiments::run_case_study(cfg, progress), args.out, "accuracy",
                              experiments::ChartKind::Line);
  } else if (name == "mask-compare") {
    experiments::emit_outputs(experiments::run_mask_compare(cfg, progress), args.out, "accuracy",
                              experiments::ChartKind::Bars);
  } else if (name == "parse-eval") {
    const auto out = experiments::run_parse_eval(cfg, progress);
    experiments::emit_outputs(out.table, args.out, "uuas", experiments::ChartKind::Bars);
  } else if (name == "relations") {
    const auto report = experiments::run_relations(cfg, progress);
    fs::create_directories(args.out);
    std::ofstream(args.out / "relations.csv") << report.to_csv();
  } else if (name == "verify-props") {
    const auto out = experiments::run_verify_props(cfg, progress);
    fs::create_directories(args.out);
    for (std::size_t k = 0; k < out.trials.size(); ++k) {
      std::ofstream(args.out / ("prop" + std::to_string(k + 1) + ".csv")) << experiments::props_csv(out.trials[k]);
    }
    experiments::emit_outputs(out.table, args.out, "violations", experiments::ChartKind::Bars);
    if (out.violations() > 0) {
      std::cerr << out.violations() << " violation(s)\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependency mining with masked language models"};
  app.require_subcommand(1);

  ExperimentArgs exp_args;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"case-study", "mask-rate sweep on the sentiment case study"},
           {"mask-compare", "compare masking strategies before finetuning"},
           {"parse-eval", "unsupervised parsing UUAS of PMI, CondPMI and CondMI"},
           {"relations", "per-relation recall of CondMI trees"},
           {"verify-props", "numerical sweeps of the four bounds"}}) {
    add_experiment(app, name, help, exp_args);
  }

  fs::path text_path, ckpt_out, ckpt_in, train_path, dev_path, conllu_out, grammar_path;
  std::string mask = "uniform:0.15";
  std::string sentence, method = "condmi";
  int epochs = 10, batch = 16, layers = 2, hidden = 64, heads = 2, ffn = 64, max_len = 32, gibbs_steps = 2000, n = 100;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool freeze = false;

  auto* train = app.add_subcommand("train-mlm", "pretrain a masked language model on a text file");
  train->add_option("--text", text_path, "one whitespace-tokenized sentence per line")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ckpt_out, "checkpoint path (vocabulary written to <out>.vocab)")->required();
  train->add_option("--mask", mask, "uniform:<rate> | cloze:<lexicon> | nocloze:<lexicon> | mixture:<p>");
  train->add_option("--epochs", epochs);
  train->add_option("--batch-size", batch);
  train->add_option("--lr", lr);
  train->add_option("--layers", layers);
  train->add_option("--hidden", hidden);
  train->add_option("--heads", heads);
  train->add_option("--ffn", ffn);
  train->add_option("--max-len", max_len);
  train->add_option("--seed", seed);

  auto* ft = app.add_subcommand("finetune", "finetune a checkpoint on <label>\\t<sentence> data");
  ft->add_option("--checkpoint", ckpt_in)->required()->check(CLI::ExistingFile);
  ft->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  ft->add_option("--dev", dev_path)->required()->check(CLI::ExistingFile);
  ft->add_option("--out", ckpt_out)->required();
  ft->add_option("--epochs", epochs);
  ft->add_option("--batch-size", batch);
  ft->add_option("--lr", lr);
  ft->add_option("--seed", seed);
  ft->add_flag("--freeze-encoder", freeze);

  auto* score = app.add_subcommand("score", "print the dependence matrix and MST of one sentence");
  score->add_option("--checkpoint", ckpt_in, "required for condpmi and condmi");
  score->add_option("--text", text_path, "corpus for pmi counts");
  score->add_option("--sentence", sentence)->required();
  score->add_option("--method", method)->check(CLI::IsMember({"pmi", "condpmi", "condmi"}));
  score->add_option("--gibbs-steps", gibbs_steps);
  score->add_option("--seed", seed);

  auto* gen = app.add_subcommand("gen-synthetic", "write synthetic grammar sentences as CoNLL-U");
  gen->add_option("--grammar", grammar_path, "experiment config whose \"grammar\" block is used")
      ->check(CLI::ExistingFile);
  gen->add_option("--n", n);
  gen->add_option("--out", conllu_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto* sub : app.get_subcommands()) {
      const std::string name = sub->get_name();
      if (name == "train-mlm") {
        const auto texts = read_text(text_path);
        const auto vocab = corpus::build_vocab(texts, 1);
        std::vector<corpus::Sentence> sentences;
        for (const auto& t : texts) {
          auto s = corpus::encode(vocab, t);
          max_len = std::max(max_len, static_cast<int>(s.size()));
          sentences.push_back(std::move(s));
        }
        const mlm::Dims dims{static_cast<int>(vocab.size()), layers, hidden, heads, ffn, max_len};
        mlm::TinyMLM model(dims, seed);
        mlm::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        const auto r = mlm::train_mlm(model, sentences, masking::parse_strategy(mask, vocab), cfg);
        for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) std::cerr << "epoch " << e + 1 << " loss " << r.epoch_loss[e] << '\n';
        mlm::save_checkpoint(ckpt_out, model, vocab.hash());
        write_vocab(vocab_path(ckpt_out), vocab);
      } else if (name == "finetune") {
        auto ck = mlm::load_checkpoint(ckpt_in);
        const auto vocab = vocab_for(ckpt_in, ck.vocab_hash);
        const auto train_set = to_ids(vocab, read_labeled(train_path));
        const auto dev_set = to_ids(vocab, read_labeled(dev_path));
        int n_classes = 0;
        for (const auto& x : train_set) n_classes = std::max(n_classes, x.label + 1);
        mlm::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        const auto r = mlm::finetune(ck.model, train_set, dev_set, n_classes, cfg, freeze);
        std::cout << "dev_accuracy " << r.dev_accuracy << " best_epoch " << r.best_epoch << '\n';
        mlm::save_checkpoint(ckpt_out, ck.model, ck.vocab_hash, &r.head);
        write_vocab(vocab_path(ckpt_out), vocab);
      } else if (name == "score") {
        const auto text = corpus::Text::from_words(split_words(sentence));
        dependence::DependenceMatrix m;
        if (method == "pmi") {
          if (text_path.empty()) throw std::invalid_argument("pmi scoring needs --text");
          auto texts = read_text(text_path);
          texts.push_back(text);
          const auto vocab = corpus::build_vocab(texts, 1);
          std::vector<corpus::Sentence> sentences;
          for (const auto& t : texts) sentences.push_back(corpus::encode(vocab, t));
          m = dependence::dependence_matrix(dependence::PmiTable(sentences), corpus::encode(vocab, text));
        } else {
          if (ckpt_in.empty()) throw std::invalid_argument(method + " scoring needs --checkpoint");
          const auto ck = mlm::load_checkpoint(ckpt_in);
          const auto vocab = vocab_for(ckpt_in, ck.vocab_hash);
          const dependence::MlmConditional conditional(ck.model);
          dependence::EstimatorConfig est;
          est.gibbs_steps = gibbs_steps;
          est.seed = seed;
          m = dependence::dependence_matrix(conditional, corpus::encode(vocab, text),
                                            dependence::method_from_string(method), est);
        }
        auto j = nlohmann::ordered_json::parse(m.to_json());
        auto edges = nlohmann::ordered_json::array();
        for (const auto& [a, b] : parsing::mst(m.scores).edges) edges.push_back({a, b});
        j["tree"] = edges;
        std::cout << j.dump(2) << '\n';
      } else if (name == "gen-synthetic") {
        corpus::GrammarConfig g;
        if (!grammar_path.empty()) g = experiments::load_config(grammar_path).grammar;
        std::ofstream(conllu_out) << corpus::to_conllu(corpus::gen_synthetic(g, n));
      } else {
        return run_experiment(name, exp_args);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
