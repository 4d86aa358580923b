#include "doctest.h"

#include <cmath>
#include <map>
#include <numeric>

#include "depmine/parsing.hpp"
#include "spanning_trees.hpp"

using namespace depmine;
using namespace depmine::parsing;
using corpus::Edge;
using corpus::GoldTree;
using depmine::testing::all_spanning_trees;

namespace {

double score_of(const Eigen::MatrixXd& s, const std::set<Edge>& t) {
  double v = 0.0;
  for (const auto& [a, b] : t) v += s(a, b);
  return v;
}

GoldTree gold_of(int n, std::set<Edge> edges) {
  GoldTree g;
  g.n_words = n;
  g.edges = std::move(edges);
  return g;
}

}  // namespace

TEST_CASE("brute-force enumeration reproduces Cayley's formula") {
  for (int n = 2; n <= 6; ++n) {
    CHECK(all_spanning_trees(n).size() == static_cast<std::size_t>(std::pow(n, n - 2)));
  }
}

TEST_CASE("mst matches brute force on random matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = rng.normal();
    }
    double best = -1e300;
    for (const auto& t : all_spanning_trees(n)) best = std::max(best, score_of(s, t));
    const ParseTree t = mst(s);
    CHECK(corpus::is_spanning_tree(n, t.edges));
    CHECK(tree_score(s, t) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("mst breaks ties by index order") {
  const Eigen::MatrixXd s = Eigen::MatrixXd::Ones(4, 4);
  const ParseTree t = mst(s);
  CHECK(t.edges == std::set<Edge>{{0, 1}, {0, 2}, {0, 3}});
}

TEST_CASE("mst errors") {
  CHECK_THROWS(mst(Eigen::MatrixXd::Zero(2, 3)));
  CHECK_THROWS(mst(Eigen::MatrixXd::Zero(1, 1)));
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
  s(0, 1) = s(1, 0) = std::nan("");
  CHECK_THROWS(mst(s));
}

TEST_CASE("linear chain and UUAS") {
  CHECK(linear_chain(4).edges == std::set<Edge>{{0, 1}, {1, 2}, {2, 3}});
  const GoldTree star = gold_of(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  CHECK(uuas(linear_chain(5), star) == doctest::Approx(0.25));
  CHECK(uuas(ParseTree{5, star.edges}, star) == 1.0);
  const auto c = corpus_uuas({linear_chain(5), ParseTree{5, star.edges}}, {star, star});
  CHECK(c.hits == 5);
  CHECK(c.gold == 8);
  CHECK_THROWS(uuas(linear_chain(4), star));
}

TEST_CASE("Prüfer decoding") {
  CHECK(prufer_decode({3, 3, 3, 4}).edges == std::set<Edge>{{0, 3}, {1, 3}, {2, 3}, {3, 4}, {4, 5}});
  CHECK(prufer_decode({}).edges == std::set<Edge>{{0, 1}});
}

TEST_CASE("random trees are uniform over the 16 labeled trees on 4 nodes") {
  Rng rng(23);
  std::map<std::set<Edge>, int> counts;
  constexpr int kDraws = 32000;
  for (int t = 0; t < kDraws; ++t) counts[random_tree(4, rng).edges]++;
  CHECK(counts.size() == 16);
  double chi2 = 0.0;
  for (const auto& [tree, k] : counts) {
    const double expected = kDraws / 16.0;
    chi2 += (k - expected) * (k - expected) / expected;
  }
  // 15 degrees of freedom; the 0.999 quantile is 37.7.
  CHECK(chi2 < 37.7);
}

TEST_CASE("random trees score 2/n against a chain on average") {
  Rng rng(29);
  const GoldTree chain = gold_of(5, linear_chain(5).edges);
  double total = 0.0;
  constexpr int kDraws = 20000;
  for (int t = 0; t < kDraws; ++t) total += uuas(random_tree(5, rng), chain);
  CHECK(std::abs(total / kDraws - 0.4) < 0.01);
}

TEST_CASE("log odds test") {
  const LogOdds r = log_odds_test(30, 10, 10, 30);
  CHECK(r.log_odds == doctest::Approx(2.0 * std::log(30.5 / 10.5)));
  CHECK(r.se == doctest::Approx(std::sqrt(2.0 / 30.5 + 2.0 / 10.5)));
  CHECK(r.significant);
  CHECK_FALSE(log_odds_test(10, 10, 11, 9).significant);
}

TEST_CASE("relation recall against the chain") {
  GoldTree g = gold_of(4, {{0, 1}, {1, 3}, {2, 3}});
  g.relations = {{{0, 1}, "a"}, {{1, 3}, "b"}, {{2, 3}, "a"}};
  const ParseTree pred{4, {{0, 1}, {1, 3}, {0, 2}}};
  const RelationReport r = relation_recall({pred}, {g});
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].relation == "a");
  CHECK(r.rows[0].gold_count == 2);
  CHECK(r.rows[0].method_hits == 1);
  CHECK(r.rows[0].chain_hits == 2);
  CHECK(r.rows[1].relation == "b");
  CHECK(r.rows[1].method_hits == 1);
  CHECK(r.rows[1].chain_hits == 0);
  CHECK(r.to_csv().rfind("relation,gold_count,method_recall,chain_recall,log_odds,significant\n", 0) == 0);
  GoldTree unlabeled = gold_of(2, {{0, 1}});
  CHECK_THROWS(relation_recall({linear_chain(2)}, {unlabeled}));
}
