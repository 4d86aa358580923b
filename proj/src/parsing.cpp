#include "depmine/parsing.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace depmine::parsing {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

ParseTree mst(const Eigen::MatrixXd& scores) {
  const auto n = static_cast<int>(scores.rows());
  if (scores.cols() != scores.rows()) throw std::invalid_argument("mst: score matrix must be square");
  if (n < 2) throw std::invalid_argument("mst: need at least two words");
  if (!scores.allFinite()) throw std::invalid_argument("mst: non-finite score");

  std::vector<std::tuple<double, int, int>> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) edges.emplace_back(scores(i, j), i, j);
  }
  std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });

  ParseTree tree;
  tree.n_words = n;
  DisjointSet sets(n);
  for (const auto& [s, i, j] : edges) {
    if (sets.unite(i, j)) {
      tree.edges.emplace(i, j);
      if (static_cast<int>(tree.edges.size()) == n - 1) break;
    }
  }
  return tree;
}

double tree_score(const Eigen::MatrixXd& scores, const ParseTree& tree) {
  double total = 0.0;
  for (const auto& [i, j] : tree.edges) total += scores(i, j);
  return total;
}

ParseTree linear_chain(int n) {
  if (n < 2) throw std::invalid_argument("linear_chain: need at least two words");
  ParseTree tree;
  tree.n_words = n;
  for (int k = 0; k + 1 < n; ++k) tree.edges.emplace(k, k + 1);
  return tree;
}

ParseTree prufer_decode(const std::vector<int>& sequence) {
  const int n = static_cast<int>(sequence.size()) + 2;
  std::vector<int> degree(static_cast<std::size_t>(n), 1);
  for (int v : sequence) {
    if (v < 0 || v >= n) throw std::invalid_argument("prufer_decode: label out of range");
    ++degree[v];
  }
  ParseTree tree;
  tree.n_words = n;
  for (int v : sequence) {
    int leaf = 0;
    while (degree[leaf] != 1) ++leaf;
    tree.edges.insert(corpus::make_edge(leaf, v));
    --degree[leaf];
    --degree[v];
  }
  int u = -1;
  for (int k = 0; k < n; ++k) {
    if (degree[k] == 1) {
      if (u < 0) {
        u = k;
      } else {
        tree.edges.insert(corpus::make_edge(u, k));
        break;
      }
    }
  }
  return tree;
}

ParseTree random_tree(int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("random_tree: need at least two words");
  std::vector<int> sequence(static_cast<std::size_t>(n - 2));
  for (int& v : sequence) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  return prufer_decode(sequence);
}

double uuas(const ParseTree& pred, const corpus::GoldTree& gold) {
  return corpus_uuas({pred}, {gold}).value();
}

UuasCount corpus_uuas(const std::vector<ParseTree>& preds, const std::vector<corpus::GoldTree>& golds) {
  if (preds.size() != golds.size()) throw std::invalid_argument("uuas: tree lists differ in length");
  UuasCount count;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].n_words != golds[s].n_words) {
      throw std::invalid_argument("uuas: word count mismatch in sentence " + std::to_string(s));
    }
    for (const auto& e : golds[s].edges) count.hits += preds[s].edges.count(e);
    count.gold += golds[s].edges.size();
  }
  return count;
}

LogOdds log_odds_test(double a_hit, double a_miss, double b_hit, double b_miss) {
  if (a_hit < 0 || a_miss < 0 || b_hit < 0 || b_miss < 0) throw std::invalid_argument("log_odds_test: negative count");
  const double ah = a_hit + 0.5, am = a_miss + 0.5, bh = b_hit + 0.5, bm = b_miss + 0.5;
  LogOdds r;
  r.log_odds = std::log((ah * bm) / (am * bh));
  r.se = std::sqrt(1.0 / ah + 1.0 / am + 1.0 / bh + 1.0 / bm);
  r.significant = std::abs(r.log_odds) > 1.96 * r.se;
  return r;
}

LogOdds RelationRow::test() const {
  const auto g = static_cast<double>(gold_count);
  const auto m = static_cast<double>(method_hits);
  const auto c = static_cast<double>(chain_hits);
  return log_odds_test(m, g - m, c, g - c);
}

RelationReport relation_recall(const std::vector<ParseTree>& preds, const std::vector<corpus::GoldTree>& golds) {
  if (preds.size() != golds.size()) throw std::invalid_argument("relation_recall: tree lists differ in length");
  std::map<std::string, RelationRow> rows;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& gold = golds[s];
    if (preds[s].n_words != gold.n_words) throw std::invalid_argument("relation_recall: word count mismatch");
    for (const auto& e : gold.edges) {
      auto it = gold.relations.find(e);
      if (it == gold.relations.end()) {
        throw std::invalid_argument("relation_recall: gold edge without a relation label");
      }
      RelationRow& row = rows[it->second];
      row.relation = it->second;
      ++row.gold_count;
      row.method_hits += preds[s].edges.count(e);
      // Adjacent words are exactly the linear-chain edges.
      row.chain_hits += (e.second - e.first == 1) ? 1 : 0;
    }
  }
  RelationReport report;
  for (auto& [label, row] : rows) report.rows.push_back(std::move(row));
  return report;
}

std::string RelationReport::to_csv() const {
  std::ostringstream out;
  out << "relation,gold_count,method_recall,chain_recall,log_odds,significant\n";
  out << std::setprecision(17);
  for (const auto& row : rows) {
    const LogOdds t = row.test();
    out << row.relation << ',' << row.gold_count << ',' << row.method_recall() << ',' << row.chain_recall() << ','
        << t.log_odds << ',' << (t.significant ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string to_tsv(const ParseTree& tree, const std::vector<std::string>& words) {
  if (static_cast<int>(words.size()) != tree.n_words) throw std::invalid_argument("to_tsv: word count mismatch");
  std::vector<std::vector<int>> nbrs(words.size());
  for (const auto& [a, b] : tree.edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::ostringstream out;
  for (std::size_t k = 0; k < words.size(); ++k) {
    std::sort(nbrs[k].begin(), nbrs[k].end());
    out << k << '\t' << words[k] << '\t';
    for (std::size_t m = 0; m < nbrs[k].size(); ++m) out << (m ? "," : "") << nbrs[k][m];
    out << '\n';
  }
  return out.str();
}

}  // namespace depmine::parsing
