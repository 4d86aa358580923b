#include "depmine/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "depmine/rng.hpp"

namespace depmine::corpus {

namespace {

const std::vector<std::string>& special_surface() {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[MASK]", "[CLS]"};
  return specials;
}

bool is_special_surface(std::string_view token) {
  const auto& specials = special_surface();
  return std::find(specials.begin(), specials.end(), token) != specials.end();
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------- Vocab

Vocab::Vocab() {
  for (const auto& s : special_surface()) {
    index_.emplace(s, static_cast<int>(tokens_.size()));
    tokens_.push_back(s);
  }
}

int Vocab::add(std::string_view token) {
  if (is_special_surface(token)) return kUnk;
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<int> Vocab::find(std::string_view token) const {
  if (is_special_surface(token)) return std::nullopt;
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id_of(std::string_view token) const { return find(token).value_or(kUnk); }

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char ch : t) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- Text / Sentence

Text Text::from_words(std::vector<std::string> words) {
  Text t;
  t.word_map.resize(words.size());
  std::iota(t.word_map.begin(), t.word_map.end(), 0);
  t.surface = std::move(words);
  return t;
}

void validate_word_map(const std::vector<int>& word_map) {
  if (word_map.empty()) return;
  if (word_map.front() != 0) throw std::invalid_argument("word_map must start at word 0");
  for (std::size_t k = 1; k < word_map.size(); ++k) {
    const int step = word_map[k] - word_map[k - 1];
    if (step != 0 && step != 1) {
      throw std::invalid_argument("word_map must be monotone and surjective");
    }
  }
}

Sentence encode(const Vocab& vocab, const Text& text) {
  if (text.word_map.size() != text.surface.size()) {
    throw std::invalid_argument("text word_map length differs from surface length");
  }
  Sentence s;
  s.surface = text.surface;
  s.word_map = text.word_map;
  s.ids.reserve(text.surface.size());
  for (const auto& w : text.surface) s.ids.push_back(vocab.id_of(w));
  return s;
}

void validate(const Sentence& sentence, const Vocab& vocab) {
  if (sentence.ids.empty()) throw std::invalid_argument("sentence is empty");
  if (sentence.ids.size() != sentence.surface.size() || sentence.ids.size() != sentence.word_map.size()) {
    throw std::invalid_argument("sentence field lengths differ");
  }
  for (int id : sentence.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw std::invalid_argument("token id outside vocabulary");
    }
  }
  validate_word_map(sentence.word_map);
}

// ---------------------------------------------------------------- trees

bool is_spanning_tree(int n, const std::set<Edge>& edges) {
  if (n < 1) return false;
  if (static_cast<int>(edges.size()) != n - 1) return false;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> root = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : edges) {
    if (a == b || a < 0 || b < 0 || a >= n || b >= n) return false;
    const int ra = root(a);
    const int rb = root(b);
    if (ra == rb) return false;
    parent[ra] = rb;
  }
  return true;
}

void GoldTree::validate() const {
  for (const auto& [a, b] : edges) {
    if (a == b) throw TreeError("self-loop on word " + std::to_string(a));
  }
  if (!is_spanning_tree(n_words, edges)) {
    throw TreeError("edges do not form a spanning tree over " + std::to_string(n_words) + " words");
  }
}

// ---------------------------------------------------------------- CoNLL-U

std::vector<TreeExample> parse_conllu(std::string_view content) {
  std::vector<TreeExample> out;
  std::vector<std::string> words;
  std::vector<int> heads;
  std::vector<std::string> rels;
  std::string sent_id;
  std::size_t block_start = 1;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (words.empty()) {
      sent_id.clear();
      return;
    }
    TreeExample ex;
    ex.id = sent_id.empty() ? "sentence@" + std::to_string(block_start) : sent_id;
    const int n = static_cast<int>(words.size());
    ex.tree.n_words = n;
    for (int k = 0; k < n; ++k) {
      const int h = heads[k];
      if (h == 0) continue;
      if (h < 0 || h > n) throw TreeError("head out of range in " + ex.id);
      const Edge e = make_edge(k, h - 1);
      if (k == h - 1 || !ex.tree.edges.insert(e).second) {
        throw TreeError("HEAD column is not a tree in " + ex.id);
      }
      ex.tree.relations[e] = rels[k];
    }
    const int roots = static_cast<int>(std::count(heads.begin(), heads.end(), 0));
    if (roots != 1 || !is_spanning_tree(n, ex.tree.edges)) {
      throw TreeError("HEAD column is cyclic or disconnected in " + ex.id);
    }
    ex.text = Text::from_words(std::move(words));
    out.push_back(std::move(ex));
    words.clear();
    heads.clear();
    rels.clear();
    sent_id.clear();
  };

  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) {
      flush();
      block_start = line_no + 1;
      if (end == content.size()) break;
      continue;
    }
    if (line.front() == '#') {
      constexpr std::string_view key = "# sent_id";
      if (line.substr(0, key.size()) == key) {
        auto eq = line.find('=');
        if (eq != std::string_view::npos) sent_id = std::string(trim(line.substr(eq + 1)));
      }
      if (end == content.size()) break;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 10) {
      throw ParseError("expected 10 tab-separated columns, got " + std::to_string(fields.size()), line_no);
    }
    const std::string& id_field = fields[0];
    if (id_field.find('-') != std::string::npos || id_field.find('.') != std::string::npos) {
      if (end == content.size()) break;
      continue;
    }
    const auto idx = parse_int(id_field);
    if (!idx || *idx != static_cast<int>(words.size()) + 1) {
      throw ParseError("unexpected token index '" + id_field + "'", line_no);
    }
    const auto head = parse_int(fields[6]);
    if (!head) throw ParseError("invalid HEAD '" + fields[6] + "'", line_no);
    words.push_back(fields[1]);
    heads.push_back(*head);
    rels.push_back(fields[7]);
    if (end == content.size()) break;
  }
  flush();
  return out;
}

std::vector<TreeExample> load_conllu(const std::filesystem::path& path) {
  return parse_conllu(read_file(path));
}

std::string to_conllu(const std::vector<TreeExample>& corpus) {
  std::ostringstream out;
  for (const auto& ex : corpus) {
    const int n = ex.tree.n_words;
    std::vector<int> head(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [a, b] : ex.tree.edges) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<int> stack = {0};
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    if (n > 0) seen[0] = true;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          head[v] = u;
          stack.push_back(v);
        }
      }
    }
    if (!ex.id.empty()) out << "# sent_id = " << ex.id << '\n';
    for (int k = 0; k < n; ++k) {
      std::string rel = "root";
      if (head[k] >= 0) {
        auto it = ex.tree.relations.find(make_edge(k, head[k]));
        rel = it == ex.tree.relations.end() ? "dep" : it->second;
      }
      out << (k + 1) << '\t' << ex.text.surface[k] << "\t_\t_\t_\t_\t" << (head[k] + 1) << '\t' << rel
          << "\t_\t_\n";
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- synthetic grammar

void GrammarConfig::validate() const {
  if (n_word_classes < 1 || vocab_per_class < 1 || n_topics < 1 || max_depth < 1) {
    throw ConfigError("grammar counts must be >= 1");
  }
  if (!(stop_prob > 0.0 && stop_prob < 1.0)) throw ConfigError("stop_prob must lie in (0, 1)");
  if (!(attach_concentration > 0.0)) throw ConfigError("attach_concentration must be positive");
  if (!(topic_home_weight >= 1.0)) throw ConfigError("topic_home_weight must be >= 1");
  if (!(topic_weight >= 0.0 && topic_weight <= 1.0)) throw ConfigError("topic_weight must lie in [0, 1]");
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  if (layered && n_word_classes < n_topics * (max_depth + 1)) {
    throw ConfigError("layered grammar needs n_word_classes >= n_topics * (max_depth + 1)");
  }
}

std::string synthetic_word(int word_class, int k) {
  return "c" + std::to_string(word_class) + "w" + std::to_string(k);
}

namespace {



std::vector<double> sharpened(const std::vector<double>& scores, double concentration) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(concentration * (scores[k] - top));
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

// Depth layer of a class when cfg.layered is set. Consecutive runs of
// n_topics classes share a layer so every layer holds classes of every topic.
int class_layer(const GrammarConfig& cfg, int c) { return (c / cfg.n_topics) % (cfg.max_depth + 1); }

std::vector<double> restricted(std::vector<double> p, const GrammarConfig& cfg, int layer) {
  double total = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (class_layer(cfg, static_cast<int>(c)) != layer) p[c] = 0.0;
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

GrammarTables grammar_tables(const GrammarConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).split(1);
  const auto n_classes = static_cast<std::size_t>(cfg.n_word_classes);
  GrammarTables t;
  t.n_layers = cfg.max_depth + 1;
  // Each class has a home topic; a topic prefers its home classes by
  // topic_home_weight : 1.
  for (int z = 0; z < cfg.n_topics; ++z) {
    std::vector<double> prior(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) prior[c] = (static_cast<int>(c) % cfg.n_topics == z) ? cfg.topic_home_weight : 1.0;
    const double total = std::accumulate(prior.begin(), prior.end(), 0.0);
    for (double& v : prior) v /= total;
    t.topic_prior.push_back(std::move(prior));
    for (int layer = 0; layer <= cfg.max_depth; ++layer) {
      t.layer_prior.push_back(cfg.layered ? restricted(t.topic_prior.back(), cfg, layer) : t.topic_prior.back());
    }
  }
  for (auto* table : {&t.left_child, &t.right_child}) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::vector<double> scores(n_classes);
      for (double& s : scores) s = rng.normal();
      auto p = sharpened(scores, cfg.attach_concentration);
      if (cfg.layered) p = restricted(std::move(p), cfg, (class_layer(cfg, static_cast<int>(c)) + 1) % (cfg.max_depth + 1));
      table->push_back(std::move(p));
    }
  }
  return t;
}

namespace {

struct Node {
  int word_class;
  int head;  // index into the node list, -1 for the root
  int depth;
  char side;  // 'L' or 'R' relative to the head
  std::vector<int> left;   // nearest first
  std::vector<int> right;  // nearest first
};

}  // namespace

std::vector<TreeExample> gen_synthetic(const GrammarConfig& cfg, int n) {
  cfg.validate();
  if (n < 1) throw ConfigError("gen_synthetic: n must be >= 1");
  const GrammarTables tables = grammar_tables(cfg);
  Rng rng = Rng(cfg.seed).split(2);
  constexpr int kMaxAttempts = 100000;

  std::vector<TreeExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    std::vector<Node> nodes;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      nodes.clear();
      const auto topic = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.n_topics)));
      auto prior_at = [&](int depth) -> const std::vector<double>& {
        return tables.prior(static_cast<int>(topic), depth);
      };
      nodes.push_back(Node{static_cast<int>(rng.categorical(prior_at(0))), -1, 0, 'R', {}, {}});
      bool overflow = false;
      std::vector<int> frontier = {0};
      // Breadth of expansion does not matter for the distribution; expand in creation order.
      for (std::size_t q = 0; q < nodes.size() && !overflow; ++q) {
        for (char side : {'L', 'R'}) {
          while (!overflow && nodes[q].depth < cfg.max_depth && rng.uniform() < 1.0 - cfg.stop_prob) {
            const auto& attach = side == 'L' ? tables.left_child : tables.right_child;
            const auto& dist = rng.uniform() < cfg.topic_weight
                                   ? prior_at(nodes[q].depth + 1)
                                   : attach[static_cast<std::size_t>(nodes[q].word_class)];
            const int child = static_cast<int>(nodes.size());
            nodes.push_back(Node{static_cast<int>(rng.categorical(dist)), static_cast<int>(q),
                                 nodes[q].depth + 1, side, {}, {}});
            (side == 'L' ? nodes[q].left : nodes[q].right).push_back(child);
            if (static_cast<int>(nodes.size()) > cfg.max_len) overflow = true;
          }
        }
      }
      ok = !overflow && nodes.size() >= 2;
    }
    if (!ok) throw ConfigError("grammar never produced a sentence within the length bounds");

    // Linearize: left dependents (farthest first), head, right dependents (nearest first).
    std::vector<int> order;
    std::function<void(int)> emit = [&](int u) {
      for (auto it = nodes[u].left.rbegin(); it != nodes[u].left.rend(); ++it) emit(*it);
      order.push_back(u);
      for (int v : nodes[u].right) emit(v);
    };
    emit(0);
    std::vector<int> position(nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = static_cast<int>(k);

    std::vector<std::string> words;
    words.reserve(order.size());
    for (int u : order) {
      const auto k = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_per_class)));
      words.push_back(synthetic_word(nodes[u].word_class, k));
    }
    TreeExample ex;
    ex.id = "synthetic-" + std::to_string(s);
    ex.tree.n_words = static_cast<int>(nodes.size());
    for (std::size_t u = 1; u < nodes.size(); ++u) {
      const Edge e = make_edge(position[u], position[nodes[u].head]);
      ex.tree.edges.insert(e);
      ex.tree.relations[e] = std::string(nodes[u].side == 'L' ? "Ldep" : "Rdep") + std::to_string(nodes[u].depth);
    }
    ex.text = Text::from_words(std::move(words));
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------- case study

const std::vector<std::string>& sentiment_words() {
  static const std::vector<std::string> words = {
      // positive
      "good", "great", "excellent", "wonderful", "brilliant", "charming", "delightful", "superb",
      "enjoyable", "moving", "funny", "beautiful", "clever", "fresh", "engaging", "touching",
      "solid", "amazing", "lovely", "gripping",
      // negative
      "bad", "awful", "terrible", "boring", "dull", "tedious", "weak", "mess", "poor", "lame",
      "stupid", "bland", "clumsy", "pointless", "worst", "tiresome", "ugly", "flat", "annoying",
      "forgettable"};
  return words;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the", "a", "this", "that", "movie", "film", "story", "plot", "cast", "script",
      "is", "was", "feels", "seems", "and", "but", "with", "of", "its", "an",
      "director", "scene", "ending", "acting", "really", "quite", "very", "just", "it", "all"};
  return words;
}

int majority_polarity(const Text& text) {
  const auto& lex = sentiment_words();
  int pos = 0;
  int neg = 0;
  for (const auto& w : text.surface) {
    auto it = std::find(lex.begin(), lex.end(), w);
    if (it == lex.end()) continue;
    (it - lex.begin() < 20 ? pos : neg)++;
  }
  return pos > neg ? 1 : 0;
}

std::vector<LabeledExample> gen_case_study(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen_case_study: n must be >= 1");
  Rng rng = Rng(seed).split(3);
  const auto& lex = sentiment_words();
  const auto& fill = filler_words();
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const int label = static_cast<int>(rng.below(2));
    const int n_polar = 1 + static_cast<int>(rng.below(3));
    // With three polarity words one may disagree; the majority still matches the label.
    const int n_agree = n_polar == 3 ? 2 + static_cast<int>(rng.below(2)) : n_polar;
    const int n_fill = 3 + static_cast<int>(rng.below(4));
    std::vector<std::string> polar;
    for (int k = 0; k < n_polar; ++k) {
      const int polarity = k < n_agree ? label : 1 - label;
      const std::size_t offset = polarity == 1 ? 0 : 20;
      polar.push_back(lex[offset + rng.below(20)]);
    }
    std::vector<std::string> words;
    for (int k = 0; k < n_fill; ++k) words.push_back(fill[rng.below(fill.size())]);
    for (const auto& w : polar) {
      const auto at = static_cast<std::ptrdiff_t>(rng.below(words.size() + 1));
      words.insert(words.begin() + at, w);
    }
    words.emplace_back(label == 1 ? kPositiveWord : kNegativeWord);
    out.push_back(LabeledExample{Text::from_words(std::move(words)), label});
  }
  return out;
}

std::vector<LabeledExample> strip_label_word(const std::vector<LabeledExample>& examples) {
  std::vector<LabeledExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    auto words = ex.text.surface;
    if (!words.empty() && (words.back() == kPositiveWord || words.back() == kNegativeWord)) words.pop_back();
    out.push_back(LabeledExample{Text::from_words(std::move(words)), ex.label});
  }
  return out;
}

// ---------------------------------------------------------------- vocab / lexicon

Vocab build_vocab(const std::vector<Text>& corpus, int min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, int> counts;
  std::vector<std::string> first_seen;
  for (const auto& text : corpus) {
    for (const auto& w : text.surface) {
      if (counts[w]++ == 0) first_seen.push_back(w);
    }
  }
  Vocab vocab;
  for (const auto& w : first_seen) {
    if (counts[w] >= min_count) vocab.add(w);
  }
  return vocab;
}

LexiconLoad parse_lexicon(std::string_view content, const Vocab& vocab, std::string name) {
  LexiconLoad result;
  result.lexicon.name = std::move(name);
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab != std::string_view::npos) line = trim(line.substr(0, tab));
    if (auto id = vocab.find(line)) {
      result.lexicon.words.insert(*id);
    } else {
      ++result.dropped;
    }
  }
  if (result.lexicon.words.empty()) {
    throw std::runtime_error("lexicon '" + result.lexicon.name + "' has no in-vocabulary words");
  }
  return result;
}

LexiconLoad load_lexicon(const std::filesystem::path& path, const Vocab& vocab) {
  return parse_lexicon(read_file(path), vocab, path.stem().string());
}

// ---------------------------------------------------------------- JSONL

std::string dump_jsonl(const std::vector<TreeExample>& corpus) {
  std::string out;
  for (const auto& ex : corpus) {
    nlohmann::ordered_json j;
    j["surface"] = ex.text.surface;
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [a, b] : ex.tree.edges) edges.push_back({a, b});
    j["edges"] = edges;
    auto rels = nlohmann::ordered_json::object();
    for (const auto& [e, label] : ex.tree.relations) {
      rels[std::to_string(e.first) + "-" + std::to_string(e.second)] = label;
    }
    j["relations"] = rels;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TreeExample> load_jsonl(std::string_view content) {
  std::vector<TreeExample> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = trim(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    TreeExample ex;
    ex.id = "jsonl@" + std::to_string(line_no);
    ex.text = Text::from_words(j.at("surface").get<std::vector<std::string>>());
    ex.tree.n_words = static_cast<int>(ex.text.size());
    for (const auto& e : j.at("edges")) ex.tree.edges.insert(make_edge(e.at(0).get<int>(), e.at(1).get<int>()));
    if (j.contains("relations")) {
      for (const auto& [key, value] : j["relations"].items()) {
        const auto dash = key.find('-');
        const auto a = parse_int(std::string_view(key).substr(0, dash));
        const auto b = dash == std::string::npos ? std::nullopt : parse_int(std::string_view(key).substr(dash + 1));
        if (!a || !b) throw ParseError("invalid relation key '" + key + "'", line_no);
        ex.tree.relations[make_edge(*a, *b)] = value.get<std::string>();
      }
    }
    try {
      ex.tree.validate();
    } catch (const TreeError& e) {
      throw TreeError(std::string(e.what()) + " in " + ex.id);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace depmine::corpus
