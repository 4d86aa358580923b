#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace depmine::corpus {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Undirected word-index pair, always stored with first < second.
using Edge = std::pair<int, int>;

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Token <-> id table. Ids 0..3 are reserved for the special tokens.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kCls = 3;
  static constexpr int kNumSpecials = 4;

  Vocab();

  /// Adds `token` if absent; returns its id. Special surface strings are
  /// never added as ordinary tokens.
  int add(std::string_view token);
  /// Id of `token`, or kUnk when it is unknown or a special surface string.
  int id_of(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }
  /// FNV-1a over the newline-joined token list.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokenized text before id assignment. `word_map[k]` is the word index of
/// token k; identity for word-level tokenization.
struct Text {
  std::vector<std::string> surface;
  std::vector<int> word_map;

  static Text from_words(std::vector<std::string> words);
  std::size_t size() const { return surface.size(); }
  int n_words() const { return word_map.empty() ? 0 : word_map.back() + 1; }
};

struct Sentence {
  std::vector<int> ids;
  std::vector<std::string> surface;
  std::vector<int> word_map;

  std::size_t size() const { return ids.size(); }
  int n_words() const { return word_map.empty() ? 0 : word_map.back() + 1; }
};

Sentence encode(const Vocab& vocab, const Text& text);
/// Throws std::invalid_argument when a Sentence invariant is violated.
void validate(const Sentence& sentence, const Vocab& vocab);
void validate_word_map(const std::vector<int>& word_map);

struct GoldTree {
  int n_words = 0;
  std::set<Edge> edges;
  std::map<Edge, std::string> relations;

  /// Throws TreeError unless the edges form a spanning tree on 0..n_words-1.
  void validate() const;
};

/// True iff `edges` is a spanning tree on `n` nodes.
bool is_spanning_tree(int n, const std::set<Edge>& edges);

struct TreeExample {
  Text text;
  GoldTree tree;
  std::string id;
};

struct LabeledExample {
  Text text;
  int label = 0;
};

struct Lexicon {
  std::string name;
  std::set<int> words;

  bool contains(int id) const { return words.count(id) != 0; }
};

struct LexiconLoad {
  Lexicon lexicon;
  std::size_t dropped = 0;
};

struct GrammarConfig {
  int n_word_classes = 8;
  int vocab_per_class = 3;
  int n_topics = 2;
  double stop_prob = 0.6;
  double attach_concentration = 2.0;
  /// Weight of the topic prior in the child-class mixture.
  double topic_weight = 0.3;
  /// Prior weight of a topic's home classes relative to the other classes.
  double topic_home_weight = 5.0;
  int max_depth = 3;
  int max_len = 10;
  /// Assign every class a depth layer; heads only emit children from the
  /// next layer, which makes attachments identifiable from word classes.
  bool layered = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// CoNLL-U reader. Comment lines and multiword-token ranges are skipped;
/// empty nodes (decimal ids) are skipped as well.
std::vector<TreeExample> load_conllu(const std::filesystem::path& path);
std::vector<TreeExample> parse_conllu(std::string_view content);
/// Minimal CoNLL-U writer: ID, FORM, HEAD and DEPREL columns are filled by
/// rooting each tree at word 0; other columns are "_".
std::string to_conllu(const std::vector<TreeExample>& corpus);

/// Samples `n` sentences with gold trees from the topic-confounded
/// dependency grammar described by `cfg`. Deterministic in cfg.seed.
std::vector<TreeExample> gen_synthetic(const GrammarConfig& cfg, int n);

/// Probability tables behind gen_synthetic.
struct GrammarTables {
  int n_layers = 1;  // max_depth + 1
  std::vector<std::vector<double>> topic_prior;   // [topic][class]
  std::vector<std::vector<double>> left_child;    // [head class][child class]
  std::vector<std::vector<double>> right_child;
  /// [topic * n_layers + depth][class]; the topic prior restricted to the
  /// depth's layer for layered grammars, the plain topic prior otherwise.
  std::vector<std::vector<double>> layer_prior;

  const std::vector<double>& prior(int topic, int depth) const {
    return layer_prior.at(static_cast<std::size_t>(topic * n_layers + depth));
  }
};
GrammarTables grammar_tables(const GrammarConfig& cfg);

/// Surface form used by gen_synthetic for word `k` of class `c`.
std::string synthetic_word(int word_class, int k);

/// Built-in sentiment lexicon (20 positive then 20 negative words).
const std::vector<std::string>& sentiment_words();
const std::vector<std::string>& filler_words();
inline constexpr std::string_view kPositiveWord = "positive";
inline constexpr std::string_view kNegativeWord = "negative";

/// Labeled sentiment sentences; the final token is the label word.
std::vector<LabeledExample> gen_case_study(int n, std::uint64_t seed);
/// Copy of `examples` with the trailing label word removed.
std::vector<LabeledExample> strip_label_word(const std::vector<LabeledExample>& examples);
/// Majority polarity (1 = positive) recomputed from lexicon words in `text`.
int majority_polarity(const Text& text);

Vocab build_vocab(const std::vector<Text>& corpus, int min_count);

LexiconLoad load_lexicon(const std::filesystem::path& path, const Vocab& vocab);
LexiconLoad parse_lexicon(std::string_view content, const Vocab& vocab, std::string name);

/// Line-delimited JSON: {"surface":[...],"edges":[[i,j],...],"relations":{"i-j":"label"}}.
std::string dump_jsonl(const std::vector<TreeExample>& corpus);
std::vector<TreeExample> load_jsonl(std::string_view content);

}  // namespace depmine::corpus
