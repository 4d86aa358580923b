#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depmine/corpus.hpp"
#include "depmine/rng.hpp"

namespace depmine::parsing {

using corpus::Edge;

struct ParseTree {
  int n_words = 0;
  std::set<Edge> edges;
};

/// Maximum spanning tree of a symmetric score matrix. Kruskal over edges
/// sorted by descending score, ties broken toward the lexicographically
/// smaller (i, j).
ParseTree mst(const Eigen::MatrixXd& scores);

/// Sum of scores over the tree's edges.
double tree_score(const Eigen::MatrixXd& scores, const ParseTree& tree);

ParseTree linear_chain(int n);
/// Uniform labeled spanning tree by decoding a random Prufer sequence.
ParseTree random_tree(int n, Rng& rng);
/// Decodes a Prufer sequence of length n - 2 over 0..n-1.
ParseTree prufer_decode(const std::vector<int>& sequence);

/// Fraction of gold edges present in `pred` for one sentence.
double uuas(const ParseTree& pred, const corpus::GoldTree& gold);

struct UuasCount {
  std::size_t hits = 0;
  std::size_t gold = 0;
  double value() const { return gold == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(gold); }
};
/// Micro-averaged corpus UUAS.
UuasCount corpus_uuas(const std::vector<ParseTree>& preds, const std::vector<corpus::GoldTree>& golds);

struct LogOdds {
  double log_odds = 0.0;
  double se = 0.0;
  bool significant = false;
};
/// Haldane-Anscombe corrected log odds ratio with a Wald test at p = 0.05.
LogOdds log_odds_test(double a_hit, double a_miss, double b_hit, double b_miss);

struct RelationRow {
  std::string relation;
  std::size_t gold_count = 0;
  std::size_t method_hits = 0;
  std::size_t chain_hits = 0;
  double method_recall() const { return gold_count ? static_cast<double>(method_hits) / gold_count : 0.0; }
  double chain_recall() const { return gold_count ? static_cast<double>(chain_hits) / gold_count : 0.0; }
  LogOdds test() const;
};

struct RelationReport {
  std::vector<RelationRow> rows;  // sorted by relation label

  /// CSV with columns relation,gold_count,method_recall,chain_recall,log_odds,significant.
  std::string to_csv() const;
};

/// Per-relation recall of `preds` against the linear-chain baseline.
RelationReport relation_recall(const std::vector<ParseTree>& preds, const std::vector<corpus::GoldTree>& golds);

/// Tab-separated parse listing: word index, surface, sorted neighbor list.
std::string to_tsv(const ParseTree& tree, const std::vector<std::string>& words);

}  // namespace depmine::parsing
