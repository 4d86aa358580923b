#include "depmine/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "depmine/masking.hpp"
#include "depmine/oracle/discrete.hpp"
#include "depmine/oracle/gaussian.hpp"

namespace depmine::experiments {

using nlohmann::json;

// ---------------------------------------------------------------- config

mlm::Dims ModelConfig::dims(int vocab) const {
  mlm::Dims d;
  d.vocab = vocab;
  d.layers = layers;
  d.hidden = hidden;
  d.heads = heads;
  d.ffn = ffn;
  d.max_len = max_len;
  return d;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> known = {"case-study", "mask-compare", "parse-eval", "relations", "verify-props"};
  if (!known.count(experiment)) throw std::invalid_argument("unknown experiment '" + experiment + "'");
  if (seeds.empty()) throw std::invalid_argument("config needs at least one seed");
  if (!lexicon.empty() && !std::filesystem::exists(lexicon)) {
    throw std::invalid_argument("lexicon file not found: " + lexicon.string());
  }
  for (const auto& p : {conllu_train, conllu_eval}) {
    if (!p.empty() && !std::filesystem::exists(p)) throw std::invalid_argument("CoNLL-U file not found: " + p.string());
  }
  if (n_train < 1 || n_eval < 1 || n_sentences < 4 || finetune_examples < 2 || dev_examples < 1) {
    throw std::invalid_argument("corpus sizes must be positive");
  }
  pretrain.validate();
  finetune.validate();
  grammar.validate();
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_train(const json& j, mlm::TrainConfig& t) {
  read_opt(j, "epochs", t.epochs);
  read_opt(j, "batch_size", t.batch_size);
  read_opt(j, "lr", t.lr);
  read_opt(j, "beta1", t.beta1);
  read_opt(j, "beta2", t.beta2);
  read_opt(j, "eps", t.eps);
  read_opt(j, "early_stop_patience", t.early_stop_patience);
  read_opt(j, "final_lr_fraction", t.final_lr_fraction);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  ExperimentConfig c;
  // Default optimizer settings; configs may override.
  c.pretrain.lr = 1e-3;
  c.finetune.lr = 1e-4;
  c.finetune.epochs = 10;
  read_opt(j, "experiment", c.experiment);
  if (j.contains("seeds")) {
    if (j["seeds"].is_string()) {
      c.seeds = parse_seeds(j["seeds"].get<std::string>());
    } else {
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
  }
  if (j.contains("grammar")) {
    const json& g = j["grammar"];
    read_opt(g, "n_word_classes", c.grammar.n_word_classes);
    read_opt(g, "vocab_per_class", c.grammar.vocab_per_class);
    read_opt(g, "n_topics", c.grammar.n_topics);
    read_opt(g, "stop_prob", c.grammar.stop_prob);
    read_opt(g, "attach_concentration", c.grammar.attach_concentration);
    read_opt(g, "topic_weight", c.grammar.topic_weight);
    read_opt(g, "max_depth", c.grammar.max_depth);
    read_opt(g, "max_len", c.grammar.max_len);
    read_opt(g, "layered", c.grammar.layered);
    read_opt(g, "topic_home_weight", c.grammar.topic_home_weight);
    read_opt(g, "seed", c.grammar.seed);
  }
  read_opt(j, "n_train", c.n_train);
  read_opt(j, "n_eval", c.n_eval);
  read_opt(j, "mask", c.mask);
  if (j.contains("estimator")) {
    read_opt(j["estimator"], "gibbs_steps", c.estimator.gibbs_steps);
    read_opt(j["estimator"], "burn_in", c.estimator.burn_in);
  }
  read_opt(j, "model_seed", c.model_seed);
  read_opt(j, "relation_sentences", c.relation_sentences);
  if (j.contains("conllu_train")) c.conllu_train = j["conllu_train"].get<std::string>();
  if (j.contains("conllu_eval")) c.conllu_eval = j["conllu_eval"].get<std::string>();
  read_opt(j, "data_seed", c.data_seed);
  read_opt(j, "n_sentences", c.n_sentences);
  read_opt(j, "finetune_examples", c.finetune_examples);
  read_opt(j, "dev_examples", c.dev_examples);
  read_opt(j, "p_values", c.p_values);
  if (j.contains("lexicon")) c.lexicon = j["lexicon"].get<std::string>();
  read_opt(j, "cloze_all_positions", c.cloze_all_positions);
  if (j.contains("model")) {
    const json& m = j["model"];
    read_opt(m, "layers", c.model.layers);
    read_opt(m, "hidden", c.model.hidden);
    read_opt(m, "heads", c.model.heads);
    read_opt(m, "ffn", c.model.ffn);
    read_opt(m, "max_len", c.model.max_len);
  }
  if (j.contains("pretrain")) read_train(j["pretrain"], c.pretrain);
  if (j.contains("finetune")) read_train(j["finetune"], c.finetune);
  if (j.contains("props")) {
    const json& p = j["props"];
    read_opt(p, "prop1_models", c.props.prop1_models);
    read_opt(p, "prop2_models", c.props.prop2_models);
    read_opt(p, "prop2_samples", c.props.prop2_samples);
    read_opt(p, "prop3_tables", c.props.prop3_tables);
    read_opt(p, "prop4_pairs", c.props.prop4_pairs);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = parse_config(ss.str());
  // Relative paths inside a config resolve against the config's directory.
  const auto base = path.parent_path();
  for (auto* p : {&c.lexicon, &c.conllu_train, &c.conllu_eval}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = std::stoull(text.substr(0, dots));
    const auto hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("seed range is empty");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  if (out.empty()) throw std::invalid_argument("no seeds in '" + text + "'");
  return out;
}

// ---------------------------------------------------------------- results

void ResultTable::add(const std::string& condition, std::uint64_t seed, const std::string& metric, double value) {
  for (const auto& r : rows_) {
    if (r.condition == condition && r.seed == seed && r.metric == metric) {
      throw std::logic_error("duplicate result row for " + condition + " seed " + std::to_string(seed));
    }
  }
  rows_.push_back(ResultRow{condition, seed, metric, value});
}

std::vector<std::string> ResultTable::conditions() const {
  std::vector<std::string> out;
  for (const auto& r : rows_) {
    if (std::find(out.begin(), out.end(), r.condition) == out.end()) out.push_back(r.condition);
  }
  return out;
}

std::vector<AggregateRow> ResultTable::aggregates() const {
  std::vector<AggregateRow> out;
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& r : rows_) {
    const auto key = std::make_pair(r.condition, r.metric);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [cond, metric] : keys) {
    std::vector<double> values;
    for (const auto& r : rows_) {
      if (r.condition == cond && r.metric == metric) values.push_back(r.value);
    }
    AggregateRow a{cond, metric, 0.0, 0.0, values.size()};
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - a.mean) * (v - a.mean);
      const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      a.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
    }
    out.push_back(a);
  }
  return out;
}

double ResultTable::mean(const std::string& condition, const std::string& metric) const {
  for (const auto& a : aggregates()) {
    if (a.condition == condition && a.metric == metric) return a.mean;
  }
  throw std::out_of_range("no rows for " + condition + "/" + metric);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string ResultTable::to_csv() const {
  std::ostringstream out;
  out << "row_type,condition,seed,metric,value,ci95_halfwidth\n";
  for (const auto& r : rows_) out << "raw," << r.condition << ',' << r.seed << ',' << r.metric << ',' << fmt(r.value) << ",\n";
  for (const auto& a : aggregates()) {
    out << "aggregate," << a.condition << ",," << a.metric << ',' << fmt(a.mean) << ',' << fmt(a.ci95) << '\n';
  }
  return out.str();
}

std::string ResultTable::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : rows_) {
    rows.push_back({{"condition", r.condition}, {"seed", r.seed}, {"metric", r.metric}, {"value", r.value}});
  }
  j["rows"] = rows;
  auto aggs = nlohmann::ordered_json::array();
  for (const auto& a : aggregates()) {
    aggs.push_back({{"condition", a.condition}, {"metric", a.metric}, {"mean", a.mean}, {"ci95_halfwidth", a.ci95}, {"n", a.n}});
  }
  j["aggregates"] = aggs;
  return j.dump(2) + "\n";
}

std::string render_svg(const ResultTable& table, const std::string& metric, ChartKind kind, const std::string& title) {
  std::vector<AggregateRow> rows;
  for (const auto& a : table.aggregates()) {
    if (a.metric == metric) rows.push_back(a);
  }
  constexpr double W = 720, H = 420, left = 70, right = 20, top = 50, bottom = 70;
  const double plot_w = W - left - right;
  const double plot_h = H - top - bottom;
  double lo = 0.0, hi = 1.0;
  if (!rows.empty()) {
    lo = std::min(0.0, std::min_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.mean - a.ci95 < b.mean - b.ci95; })->mean -
                           rows.front().ci95);
    hi = 0.0;
    for (const auto& a : rows) {
      lo = std::min(lo, a.mean - a.ci95);
      hi = std::max(hi, a.mean + a.ci95);
    }
    if (hi <= lo) hi = lo + 1.0;
    hi += 0.05 * (hi - lo);
  }
  auto y_of = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  const double slot = rows.empty() ? plot_w : plot_w / static_cast<double>(rows.size());
  auto x_of = [&](std::size_t k) { return left + slot * (static_cast<double>(k) + 0.5); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
    << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << xml_escape(title) << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << y_of(std::max(lo, 0.0)) << "\" x2=\"" << left + plot_w << "\" y2=\""
    << y_of(std::max(lo, 0.0)) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    s << "<text x=\"" << left - 8 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << fmt_short(v) << "</text>\n";
  }
  s << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(metric) << "</text>\n";

  if (kind == ChartKind::Line && rows.size() > 1) {
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < rows.size(); ++k) s << (k ? " " : "") << x_of(k) << ',' << y_of(rows[k].mean);
    s << "\"/>\n";
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& a = rows[k];
    const double x = x_of(k);
    if (kind == ChartKind::Bars) {
      const double bw = slot * 0.6;
      const double y0 = y_of(std::max(lo, 0.0));
      const double y1 = y_of(a.mean);
      s << "<rect x=\"" << x - bw / 2 << "\" y=\"" << std::min(y0, y1) << "\" width=\"" << bw << "\" height=\""
        << std::abs(y0 - y1) << "\" fill=\"#1f77b4\"/>\n";
    } else {
      s << "<circle cx=\"" << x << "\" cy=\"" << y_of(a.mean) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    }
    s << "<line x1=\"" << x << "\" y1=\"" << y_of(a.mean - a.ci95) << "\" x2=\"" << x << "\" y2=\""
      << y_of(a.mean + a.ci95) << "\" stroke=\"black\"/>\n";
    for (double v : {a.mean - a.ci95, a.mean + a.ci95}) {
      s << "<line x1=\"" << x - 6 << "\" y1=\"" << y_of(v) << "\" x2=\"" << x + 6 << "\" y2=\"" << y_of(v)
        << "\" stroke=\"black\"/>\n";
    }
    s << "<text x=\"" << x << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << xml_escape(a.condition) << "</text>\n";
    s << "<text x=\"" << x << "\" y=\"" << top + plot_h + 34 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"10\" fill=\"#555\">" << fmt_short(a.mean) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_outputs(const ResultTable& table, const std::filesystem::path& dir, const std::string& metric,
                  ChartKind kind) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  write_file(dir / "results.csv", table.to_csv());
  write_file(dir / "results.json", table.to_json());
  write_file(dir / "chart.svg", render_svg(table, metric, kind, table.experiment() + ": " + metric));
}

// ---------------------------------------------------------------- shared pieces

namespace {

void report(const Progress& progress, const std::string& msg) {
  if (progress) progress(msg);
}

std::vector<mlm::LabeledIds> to_labeled_ids(const corpus::Vocab& vocab, const std::vector<corpus::LabeledExample>& data) {
  std::vector<mlm::LabeledIds> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    mlm::LabeledIds item;
    item.ids.push_back(corpus::Vocab::kCls);
    for (const auto& w : ex.text.surface) item.ids.push_back(vocab.id_of(w));
    item.label = ex.label;
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<corpus::Sentence> with_cls(const corpus::Vocab& vocab, const std::vector<corpus::LabeledExample>& data) {
  std::vector<corpus::Sentence> out;
  for (const auto& ex : data) {
    corpus::Sentence s = corpus::encode(vocab, ex.text);
    s.ids.insert(s.ids.begin(), corpus::Vocab::kCls);
    s.surface.insert(s.surface.begin(), "[CLS]");
    // CLS shares word 0's index; word_map stays monotone.
    s.word_map.insert(s.word_map.begin(), 0);
    out.push_back(std::move(s));
  }
  return out;
}

int longest(const std::vector<corpus::Sentence>& xs) {
  std::size_t n = 0;
  for (const auto& s : xs) n = std::max(n, s.ids.size());
  return static_cast<int>(n);
}

struct FinetuneSplit {
  std::vector<mlm::LabeledIds> train;
  std::vector<mlm::LabeledIds> dev;
};

// Seed-dependent draw of a small labeled training set plus a dev set.
FinetuneSplit draw_split(const std::vector<mlm::LabeledIds>& pool, int n_train, int n_dev, std::uint64_t data_seed,
                         std::uint64_t seed) {
  if (static_cast<std::size_t>(n_train + n_dev) > pool.size()) {
    throw std::invalid_argument("not enough finetuning sentences for the requested train/dev sizes");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(data_seed).split(1000 + seed);
  // Redraw until both classes appear in the training set.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    std::set<int> labels;
    for (int k = 0; k < n_train; ++k) labels.insert(pool[order[k]].label);
    if (labels.size() > 1) break;
  }
  FinetuneSplit split;
  for (int k = 0; k < n_train; ++k) split.train.push_back(pool[order[k]]);
  for (int k = n_train; k < n_train + n_dev; ++k) split.dev.push_back(pool[order[k]]);
  return split;
}

mlm::TrainConfig seeded(mlm::TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

std::string p_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "Specific-%g", p);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- case study

ResultTable run_case_study(const ExperimentConfig& cfg, const Progress& progress) {
  ResultTable table("case-study");
  const auto all = corpus::gen_case_study(cfg.n_sentences, cfg.data_seed);
  const std::size_t half = all.size() / 2;
  const std::vector<corpus::LabeledExample> pretrain_half(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
  const auto finetune_half =
      corpus::strip_label_word({all.begin() + static_cast<std::ptrdiff_t>(half), all.end()});

  std::vector<corpus::Text> texts;
  for (const auto& ex : all) texts.push_back(ex.text);
  const corpus::Vocab vocab = corpus::build_vocab(texts, 1);
  const auto pretrain_sentences = with_cls(vocab, pretrain_half);
  const auto pool = to_labeled_ids(vocab, finetune_half);
  ModelConfig mc = cfg.model;
  mc.max_len = std::max(mc.max_len, longest(pretrain_sentences));
  const mlm::Dims dims = mc.dims(static_cast<int>(vocab.size()));

  for (std::uint64_t seed : cfg.seeds) {
    const FinetuneSplit split = draw_split(pool, cfg.finetune_examples, cfg.dev_examples, cfg.data_seed, seed);
    {
      mlm::TinyMLM model(dims, seed);
      const auto r = mlm::finetune(model, split.train, split.dev, 2, seeded(cfg.finetune, seed));
      table.add("NoPretrain", seed, "accuracy", r.dev_accuracy);
      report(progress, "case-study seed " + std::to_string(seed) + " NoPretrain acc=" + fmt_short(r.dev_accuracy));
    }
    for (double p : cfg.p_values) {
      mlm::TinyMLM model(dims, seed);
      const masking::MaskStrategy strategy(masking::MixtureP{p});
      const auto pre = mlm::train_mlm(model, pretrain_sentences, strategy, seeded(cfg.pretrain, seed));
      const auto r = mlm::finetune(model, split.train, split.dev, 2, seeded(cfg.finetune, seed));
      table.add(p_label(p), seed, "accuracy", r.dev_accuracy);
      report(progress, "case-study seed " + std::to_string(seed) + " " + p_label(p) + " mlm_loss=" +
                           fmt_short(pre.epoch_loss.back()) + " acc=" + fmt_short(r.dev_accuracy) +
                           " best_epoch=" + std::to_string(r.best_epoch));
    }
  }
  return table;
}

// ---------------------------------------------------------------- mask compare

ResultTable run_mask_compare(const ExperimentConfig& cfg, const Progress& progress) {
  ResultTable table("mask-compare");
  const auto all = corpus::strip_label_word(corpus::gen_case_study(cfg.n_sentences, cfg.data_seed));
  const std::size_t half = all.size() / 2;
  const std::vector<corpus::LabeledExample> unlabeled(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<corpus::LabeledExample> labeled(all.begin() + static_cast<std::ptrdiff_t>(half), all.end());

  std::vector<corpus::Text> texts;
  for (const auto& ex : all) texts.push_back(ex.text);
  const corpus::Vocab vocab = corpus::build_vocab(texts, 1);

  corpus::Lexicon lexicon;
  if (cfg.lexicon.empty()) {
    lexicon.name = "sentiment";
    for (const auto& w : corpus::sentiment_words()) {
      if (auto id = vocab.find(w)) lexicon.words.insert(*id);
    }
  } else {
    const auto loaded = corpus::load_lexicon(cfg.lexicon, vocab);
    lexicon = loaded.lexicon;
    report(progress, "lexicon " + lexicon.name + ": " + std::to_string(lexicon.words.size()) + " words, " +
                         std::to_string(loaded.dropped) + " dropped");
  }
  auto lex = std::make_shared<const corpus::Lexicon>(lexicon);

  const auto pretrain_sentences = with_cls(vocab, unlabeled);
  const auto pool = to_labeled_ids(vocab, labeled);
  ModelConfig mc = cfg.model;
  mc.max_len = std::max(mc.max_len, longest(pretrain_sentences));
  const mlm::Dims dims = mc.dims(static_cast<int>(vocab.size()));

  const std::vector<std::pair<std::string, std::optional<masking::MaskStrategy>>> conditions = {
      {"Vanilla", std::nullopt},
      {"Uniform", masking::parse_strategy(cfg.mask, vocab)},
      {"Cloze", masking::MaskStrategy(masking::Cloze{lex, cfg.cloze_all_positions})},
      {"NoCloze", masking::MaskStrategy(masking::NoCloze{lex})},
  };
  for (std::uint64_t seed : cfg.seeds) {
    const FinetuneSplit split = draw_split(pool, cfg.finetune_examples, cfg.dev_examples, cfg.data_seed, seed);
    for (const auto& [name, strategy] : conditions) {
      mlm::TinyMLM model(dims, seed);
      if (strategy) mlm::train_mlm(model, pretrain_sentences, *strategy, seeded(cfg.pretrain, seed));
      const auto r = mlm::finetune(model, split.train, split.dev, 2, seeded(cfg.finetune, seed));
      table.add(name, seed, "accuracy", r.dev_accuracy);
      report(progress, "mask-compare seed " + std::to_string(seed) + " " + name + " acc=" + fmt_short(r.dev_accuracy));
    }
  }
  return table;
}

// ---------------------------------------------------------------- parsing

namespace {

struct ParseSetup {
  corpus::Vocab vocab;
  std::vector<corpus::TreeExample> train;
  std::vector<corpus::TreeExample> eval;
  std::vector<corpus::Sentence> train_sentences;
  std::vector<corpus::Sentence> eval_sentences;
};

ParseSetup make_parse_setup(const ExperimentConfig& cfg) {
  ParseSetup s;
  if (!cfg.conllu_train.empty() || !cfg.conllu_eval.empty()) {
    if (cfg.conllu_train.empty() || cfg.conllu_eval.empty()) {
      throw std::invalid_argument("conllu_train and conllu_eval must be given together");
    }
    s.train = corpus::load_conllu(cfg.conllu_train);
    s.eval = corpus::load_conllu(cfg.conllu_eval);
    if (static_cast<int>(s.eval.size()) > cfg.n_eval) s.eval.resize(static_cast<std::size_t>(cfg.n_eval));
  } else {
    auto all = corpus::gen_synthetic(cfg.grammar, cfg.n_train + cfg.n_eval);
    s.train.assign(all.begin(), all.begin() + cfg.n_train);
    s.eval.assign(all.begin() + cfg.n_train, all.end());
  }
  std::vector<corpus::Text> texts;
  for (const auto& ex : s.train) texts.push_back(ex.text);
  for (const auto& ex : s.eval) texts.push_back(ex.text);
  s.vocab = corpus::build_vocab(texts, 1);
  for (const auto& ex : s.train) s.train_sentences.push_back(corpus::encode(s.vocab, ex.text));
  for (const auto& ex : s.eval) s.eval_sentences.push_back(corpus::encode(s.vocab, ex.text));
  return s;
}

mlm::TinyMLM train_parse_model(const ExperimentConfig& cfg, const ParseSetup& s, double* final_loss,
                               const Progress& progress) {
  ModelConfig mc = cfg.model;
  mc.max_len = std::max({mc.max_len, longest(s.train_sentences), longest(s.eval_sentences)});
  mlm::TinyMLM model(mc.dims(static_cast<int>(s.vocab.size())), cfg.model_seed);
  const masking::MaskStrategy strategy = masking::parse_strategy(cfg.mask, s.vocab);
  const auto r = mlm::train_mlm(model, s.train_sentences, strategy, seeded(cfg.pretrain, cfg.model_seed));
  *final_loss = r.epoch_loss.back();
  report(progress, "parse-eval MLM trained: final loss " + fmt_short(*final_loss) + " (ln|V| = " +
                       fmt_short(std::log(static_cast<double>(s.vocab.size()))) + ")");
  return model;
}

std::vector<parsing::ParseTree> parse_all(const std::vector<corpus::Sentence>& sentences,
                                          const std::function<Eigen::MatrixXd(const corpus::Sentence&)>& scorer) {
  std::vector<parsing::ParseTree> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(parsing::mst(scorer(s)));
  return out;
}

std::vector<corpus::GoldTree> golds_of(const std::vector<corpus::TreeExample>& xs) {
  std::vector<corpus::GoldTree> out;
  for (const auto& x : xs) out.push_back(x.tree);
  return out;
}

}  // namespace

ParseEvalOutput run_parse_eval(const ExperimentConfig& cfg, const Progress& progress) {
  ParseEvalOutput out;
  const ParseSetup setup = make_parse_setup(cfg);
  out.eval = setup.eval;
  out.ln_vocab = std::log(static_cast<double>(setup.vocab.size()));
  const mlm::TinyMLM model = train_parse_model(cfg, setup, &out.mlm_final_loss, progress);
  const dependence::MlmConditional conditional(model);
  const auto golds = golds_of(setup.eval);

  std::vector<corpus::Sentence> all_sentences = setup.train_sentences;
  all_sentences.insert(all_sentences.end(), setup.eval_sentences.begin(), setup.eval_sentences.end());
  const dependence::PmiTable pmi(all_sentences);

  auto uuas_of = [&](const std::vector<parsing::ParseTree>& trees) { return parsing::corpus_uuas(trees, golds).value(); };

  std::vector<parsing::ParseTree> chain;
  for (const auto& s : setup.eval_sentences) chain.push_back(parsing::linear_chain(s.n_words()));
  const double chain_uuas = uuas_of(chain);
  const double pmi_uuas = uuas_of(parse_all(setup.eval_sentences, [&](const corpus::Sentence& s) {
    return dependence::dependence_matrix(pmi, s).scores;
  }));
  const double condpmi_uuas = uuas_of(parse_all(setup.eval_sentences, [&](const corpus::Sentence& s) {
    return dependence::dependence_matrix(conditional, s, dependence::Method::CondPmi, cfg.estimator).scores;
  }));
  report(progress, "parse-eval LinearChain=" + fmt_short(chain_uuas) + " PMI=" + fmt_short(pmi_uuas) +
                       " CondPMI=" + fmt_short(condpmi_uuas));

  for (std::uint64_t seed : cfg.seeds) {
    Rng rng = Rng(seed).split(7);
    std::vector<parsing::ParseTree> random;
    for (const auto& s : setup.eval_sentences) random.push_back(parsing::random_tree(s.n_words(), rng));
    dependence::EstimatorConfig est = cfg.estimator;
    est.seed = seed;
    auto condmi = parse_all(setup.eval_sentences, [&](const corpus::Sentence& s) {
      return dependence::dependence_matrix(conditional, s, dependence::Method::CondMi, est).scores;
    });
    const double random_uuas = uuas_of(random);
    const double condmi_uuas = uuas_of(condmi);
    out.table.add("Random", seed, "uuas", random_uuas);
    out.table.add("LinearChain", seed, "uuas", chain_uuas);
    out.table.add("PMI", seed, "uuas", pmi_uuas);
    out.table.add("CondPMI", seed, "uuas", condpmi_uuas);
    out.table.add("CondMI", seed, "uuas", condmi_uuas);
    report(progress, "parse-eval seed " + std::to_string(seed) + " Random=" + fmt_short(random_uuas) +
                         " CondMI=" + fmt_short(condmi_uuas));
    if (out.condmi_trees.empty()) out.condmi_trees = std::move(condmi);
  }
  out.table.add("MLM", cfg.model_seed, "final_loss", out.mlm_final_loss);
  out.table.add("MLM", cfg.model_seed, "ln_vocab", out.ln_vocab);
  return out;
}

parsing::RelationReport run_relations(const ExperimentConfig& cfg, const Progress& progress) {
  ParseSetup setup = make_parse_setup(cfg);
  if (static_cast<int>(setup.eval.size()) > cfg.relation_sentences) {
    setup.eval.resize(static_cast<std::size_t>(cfg.relation_sentences));
    setup.eval_sentences.resize(static_cast<std::size_t>(cfg.relation_sentences));
  }
  double final_loss = 0.0;
  const mlm::TinyMLM model = train_parse_model(cfg, setup, &final_loss, progress);
  const dependence::MlmConditional conditional(model);
  dependence::EstimatorConfig est = cfg.estimator;
  est.seed = cfg.seeds.front();
  const auto trees = parse_all(setup.eval_sentences, [&](const corpus::Sentence& s) {
    return dependence::dependence_matrix(conditional, s, dependence::Method::CondMi, est).scores;
  });
  return parsing::relation_recall(trees, golds_of(setup.eval));
}

// ---------------------------------------------------------------- propositions

std::size_t PropsOutput::violations() const {
  std::size_t n = 0;
  for (const auto& group : trials) {
    for (const auto& t : group) n += t.holds() ? 0 : 1;
  }
  return n;
}

std::string props_csv(const std::vector<PropTrial>& trials) {
  std::ostringstream out;
  out << "trial,lhs,rhs,slack,holds\n";
  for (const auto& t : trials) {
    out << t.trial << ',' << fmt(t.lhs) << ',' << fmt(t.rhs) << ',' << fmt(t.slack()) << ','
        << (t.holds() ? "true" : "false") << '\n';
  }
  return out.str();
}

PropsOutput run_verify_props(const ExperimentConfig& cfg, const Progress& progress) {
  PropsOutput out;
  out.trials.resize(4);
  const std::uint64_t base = cfg.seeds.front();
  auto record = [](std::vector<PropTrial>& dst, int trial, const oracle::PropReport& r) {
    dst.push_back(PropTrial{trial, r.lhs, r.rhs, r.vacuous});
  };

  for (int t = 0; t < cfg.props.prop1_models; ++t) {
    oracle::GaussianSpec spec;
    spec.L = 3 + t % 6;
    spec.k = 1 + t % 3;
    spec.n_edges = t % (spec.L * (spec.L - 1) / 2 + 1);
    spec.edge_scale = 0.2 + 0.1 * (t % 5);
    spec.seed = base * 1000003ULL + static_cast<std::uint64_t>(t);
    const auto model = oracle::gaussian_gen(spec);
    record(out.trials[0], t, oracle::prop1_check(model, t % spec.L));
  }
  report(progress, "prop1: " + std::to_string(out.trials[0].size()) + " models");

  for (int t = 0; t < cfg.props.prop2_models; ++t) {
    oracle::GaussianSpec spec;
    spec.L = 4 + t % 5;
    spec.k = 1 + t % 3;
    spec.n_edges = t % 4;
    spec.edge_scale = 0.3;
    spec.noise_var = 0.05 + 0.05 * (t % 4);
    spec.latent_var = 4.0;
    spec.loading = oracle::Loading::Orthonormal;
    spec.seed = base * 1000003ULL + 500000ULL + static_cast<std::uint64_t>(t);
    const auto model = oracle::gaussian_gen(spec);
    record(out.trials[1], t, oracle::prop2_check(model, cfg.props.prop2_samples, spec.seed));
  }
  report(progress, "prop2: " + std::to_string(out.trials[1].size()) + " models");

  for (int t = 0; t < cfg.props.prop3_tables; ++t) {
    oracle::DiscreteSpec spec;
    spec.n_z = 2 + t % 3;
    spec.L = 3 + t % 2;
    spec.V = 2 + t % 3;
    spec.concentration = (t % 4 == 0) ? 0.3 : 1.0;
    const auto model = oracle::discrete_gen(spec, base * 1000003ULL + 200000ULL + static_cast<std::uint64_t>(t));
    record(out.trials[2], t, oracle::prop3_check(model));
  }
  report(progress, "prop3: " + std::to_string(out.trials[2].size()) + " tables");

  for (int t = 0; t < cfg.props.prop4_pairs; ++t) {
    oracle::DiscreteSpec spec;
    spec.n_z = 2 + t % 3;
    spec.L = 3 + t % 2;
    spec.V = 2 + t % 3;
    const std::uint64_t seed = base * 1000003ULL + 300000ULL + static_cast<std::uint64_t>(t);
    const auto p = oracle::marginal_x(oracle::discrete_gen(spec, seed));
    Rng rng = Rng(seed).split(3);
    const double sigma = std::array<double, 3>{0.1, 0.5, 1.5}[static_cast<std::size_t>(t % 3)];
    const auto q = oracle::perturb(p, sigma, rng);
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.L)));
    const int j = (i + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.L - 1)))) % spec.L;
    record(out.trials[3], t, oracle::prop4_check(p, q, i, j));
  }
  report(progress, "prop4: " + std::to_string(out.trials[3].size()) + " pairs");

  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name = "prop" + std::to_string(k + 1);
    std::size_t bad = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (const auto& t : out.trials[k]) {
      bad += t.holds() ? 0 : 1;
      if (!t.vacuous) min_slack = std::min(min_slack, t.slack());
    }
    out.table.add(name, base, "trials", static_cast<double>(out.trials[k].size()));
    out.table.add(name, base, "violations", static_cast<double>(bad));
    out.table.add(name, base, "min_slack", out.trials[k].empty() ? 0.0 : min_slack);
  }
  return out;
}

}  // namespace depmine::experiments
