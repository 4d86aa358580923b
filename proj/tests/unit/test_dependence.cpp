#include "doctest.h"

#include <cmath>

#include "depmine/dependence.hpp"
#include "depmine/masking.hpp"
#include "depmine/parsing.hpp"
#include "joint_tables.hpp"

using namespace depmine;
using namespace depmine::dependence;
using corpus::Sentence;
using Eigen::VectorXd;
using depmine::testing::exact_pair_cmi;
using depmine::testing::flat;
using depmine::testing::random_table;

namespace {

Sentence sentence_of(std::vector<int> ids) {
  Sentence s;
  s.ids = std::move(ids);
  for (std::size_t k = 0; k < s.ids.size(); ++k) {
    s.surface.push_back(std::to_string(s.ids[k]));
    s.word_map.push_back(static_cast<int>(k));
  }
  return s;
}

class UniformModel final : public ConditionalModel {
 public:
  explicit UniformModel(int v) : v_(v) {}
  int vocab_size() const override { return v_; }
  int mask_id() const override { return v_; }
  VectorXd predict(std::span<const int>, int) const override { return VectorXd::Constant(v_, 1.0 / v_); }

 private:
  int v_;
};

// Always predicts value 1 with certainty.
class OneHotModel final : public ConditionalModel {
 public:
  int vocab_size() const override { return 3; }
  int mask_id() const override { return 3; }
  VectorXd predict(std::span<const int>, int) const override { return VectorXd::Unit(3, 1); }
};

}  // namespace

TEST_CASE("PMI from hand counts") {
  // Corpus {"a b", "a b", "c d"}: ordered within-sentence pairs, add-1 over
  // the 4x4 type grid. count(a,b) = 2, pairs = 6, p(a) = p(b) = 2/6.
  const std::vector<Sentence> corpus = {sentence_of({4, 5}), sentence_of({4, 5}), sentence_of({6, 7})};
  const PmiTable t(corpus);
  const double expected = std::log((3.0 / 22.0) / ((2.0 / 6.0) * (2.0 / 6.0)));
  CHECK(t.pmi(4, 5) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(t.pmi(4, 5) == t.pmi(5, 4));
  CHECK(t.pmi(4, 99) == 0.0);
}

TEST_CASE("PMI is negative for types that never co-occur") {
  std::vector<Sentence> corpus;
  for (int k = 0; k < 500; ++k) {
    corpus.push_back(sentence_of({4, 5, 4}));
    corpus.push_back(sentence_of({6, 7, 6}));
  }
  const PmiTable t(corpus);
  CHECK(t.pmi(4, 6) < 0.0);
  CHECK(t.pmi(5, 7) < 0.0);
}

TEST_CASE("PMI of i.i.d. tokens is near zero") {
  Rng rng(31);
  std::vector<Sentence> corpus;
  for (int k = 0; k < 10000; ++k) {
    std::vector<int> ids;
    const int len = 3 + static_cast<int>(rng.below(6));
    for (int p = 0; p < len; ++p) ids.push_back(4 + static_cast<int>(rng.below(6)));
    corpus.push_back(sentence_of(ids));
  }
  const PmiTable t(corpus);
  for (int a = 4; a < 10; ++a) {
    for (int b = 4; b < 10; ++b) CHECK(std::abs(t.pmi(a, b)) < 0.05);
  }
}

TEST_CASE("cond_pmi vanishes when the prediction ignores the partner") {
  // p(x0, x1, x2) = p(x0, x2) p(x1): x1 carries no information about x0.
  Rng rng(37);
  const int v = 3;
  const auto p02 = random_table(2, v, rng);
  const auto p1 = random_table(1, v, rng);
  std::vector<double> p(27);
  for (int a = 0; a < v; ++a) {
    for (int b = 0; b < v; ++b) {
      for (int c = 0; c < v; ++c) p[flat({a, b, c}, v)] = p02[flat({a, c}, v)] * p1[b];
    }
  }
  const JointTableModel model(3, v, p);
  for (int a = 0; a < v; ++a) {
    for (int b = 0; b < v; ++b) {
      const std::vector<int> ids = {a, b, 1};
      CHECK(std::abs(cond_pmi(model, ids, 0, 1)) < 1e-9);
    }
  }
  const int steps = 4000;
  Rng chain_rng(1);
  const std::vector<int> ids = {0, 2, 1};
  CHECK(std::abs(cond_mi(model, ids, 0, 1, steps, chain_rng)) < 3.0 / std::sqrt(steps));
}

TEST_CASE("cond_pmi respects probability bounds") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_table(3, 4, rng);
    const JointTableModel model(3, 4, p);
    std::vector<int> ids = {static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4))};
    const double c = cond_pmi(model, ids, 0, 2);
    std::vector<int> both = ids;
    both[0] = both[2] = model.mask_id();
    const double bound = -std::log(model.predict(both, 0)(ids[0]));
    CHECK(c <= bound + 1e-12);
    CHECK(bound <= std::log(4.0) * 10);
  }
  const JointTableModel model(3, 4, random_table(3, 4, rng));
  CHECK_THROWS(cond_pmi(model, std::vector<int>{0, 1, 2}, 0, 0));
  CHECK_THROWS(cond_pmi(model, std::vector<int>{0, 1, 2}, 0, 3));
}

TEST_CASE("joint table conditionals by hand") {
  // Two binary positions: p(00)=0.1, p(01)=0.2, p(10)=0.3, p(11)=0.4.
  const JointTableModel model(2, 2, {0.1, 0.2, 0.3, 0.4});
  const VectorXd given1 = model.predict(std::vector<int>{2, 1}, 0);
  CHECK(given1(0) == doctest::Approx(0.2 / 0.6));
  const VectorXd marginal = model.predict(std::vector<int>{2, 2}, 0);
  CHECK(marginal(0) == doctest::Approx(0.3));
  CHECK(marginal(1) == doctest::Approx(0.7));
}

TEST_CASE("gibbs chain under a uniform model has uniform marginals") {
  const UniformModel model(4);
  Rng rng(43);
  const auto chain = gibbs_chain(model, std::vector<int>{0, 1, 2}, 0, 2, 10000, rng);
  REQUIRE(chain.samples.size() == 10000);
  std::vector<double> ci(4, 0.0), cj(4, 0.0);
  for (const auto& [a, b] : chain.samples) {
    ci[a] += 1;
    cj[b] += 1;
  }
  double chi_i = 0.0, chi_j = 0.0;
  for (int v = 0; v < 4; ++v) {
    chi_i += (ci[v] - 2500) * (ci[v] - 2500) / 2500;
    chi_j += (cj[v] - 2500) * (cj[v] - 2500) / 2500;
  }
  // 3 degrees of freedom, p = 0.01.
  CHECK(chi_i < 11.34);
  CHECK(chi_j < 11.34);
  CHECK(chain.context == std::vector<int>{4, 1, 4});
}

TEST_CASE("gibbs chain: deterministic model and seeds") {
  const OneHotModel det;
  Rng rng(1);
  const auto chain = gibbs_chain(det, std::vector<int>{0, 0, 0}, 0, 1, 50, rng);
  for (const auto& s : chain.samples) CHECK(s == std::make_pair(1, 1));

  Rng table_rng(47);
  const JointTableModel model(3, 4, random_table(3, 4, table_rng));
  Rng a(5), b(5);
  CHECK(gibbs_chain(model, std::vector<int>{1, 2, 3}, 0, 2, 300, a).samples ==
        gibbs_chain(model, std::vector<int>{1, 2, 3}, 0, 2, 300, b).samples);
  CHECK_THROWS(gibbs_chain(model, std::vector<int>{1, 2, 3}, 0, 2, 0, a));
  CHECK_THROWS(cond_mi(model, std::vector<int>{1, 2, 3}, 0, 2, 0, a));
}

TEST_CASE("cond_mi converges to the enumerated conditional MI") {
  Rng rng(53);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_table(3, 4, rng, 0.5);
    const JointTableModel model(3, 4, p);
    const std::vector<int> ids = {1, 3, 0};
    const double exact = exact_pair_cmi(p, 4, ids, 0, 1);
    Rng chain_rng(100 + trial);
    const double est = cond_mi(model, ids, 0, 1, 100000, chain_rng);
    CHECK(std::abs(est - exact) < 0.02);
  }
}

TEST_CASE("cond_mi is not meaningfully negative") {
  Rng rng(59);
  const int steps = 2000;
  for (int trial = 0; trial < 30; ++trial) {
    const JointTableModel model(3, 3, random_table(3, 3, rng));
    Rng chain_rng(trial);
    CHECK(cond_mi(model, std::vector<int>{0, 1, 2}, 0, 2, steps, chain_rng) >= -5.0 / std::sqrt(steps));
  }
}

TEST_CASE("query cache avoids repeated model calls") {
  Rng rng(61);
  const JointTableModel model(3, 4, random_table(3, 4, rng));
  QueryCache cache(model);
  Rng chain_rng(2);
  const auto chain = gibbs_chain(model, std::vector<int>{0, 1, 2}, 0, 2, 2000, chain_rng, &cache);
  // Site i sees the doubly-masked start plus one context per x_j value;
  // site j one per x_i value.
  CHECK(cache.model_calls() <= 9);
  const auto e = cond_mi_from_chain(model, chain, &cache);
  CHECK(cache.model_calls() <= 9);
  // Both directions estimate the same quantity.
  CHECK(std::abs(e.i_given_j - e.j_given_i) < 0.05);
}

TEST_CASE("dependence matrices are symmetric with a zero diagonal") {
  Rng rng(67);
  const JointTableModel model(4, 3, random_table(4, 3, rng));
  const Sentence s = sentence_of({0, 2, 1, 1});
  EstimatorConfig cfg;
  cfg.gibbs_steps = 300;
  for (Method m : {Method::CondPmi, Method::CondMi}) {
    const auto d = dependence_matrix(model, s, m, cfg);
    CHECK(d.n == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(d.scores(i, i) == 0.0);
      for (int j = 0; j < 4; ++j) CHECK(d.scores(i, j) == d.scores(j, i));
    }
    CHECK(d.scores.allFinite());
  }
  const auto a = dependence_matrix(model, s, Method::CondMi, cfg);
  const auto b = dependence_matrix(model, s, Method::CondMi, cfg);
  CHECK(a.scores == b.scores);
  CHECK(a.to_json() == b.to_json());

  const std::vector<Sentence> corpus = {sentence_of({4, 5, 6}), sentence_of({4, 6}), sentence_of({5, 5, 7})};
  const PmiTable t(corpus);
  const auto p = dependence_matrix(t, corpus[0]);
  CHECK(p.scores(0, 1) == t.pmi(4, 5));
  CHECK(p.scores(1, 2) == t.pmi(5, 6));
  CHECK(p.scores(2, 0) == t.pmi(6, 4));
}

TEST_CASE("subword aggregation") {
  Eigen::MatrixXd m(3, 3);
  m << 0, 1, 2, 1, 0, 5, 2, 5, 0;
  CHECK(aggregate_words(m, {0, 1, 2}) == m);
  const Eigen::MatrixXd w = aggregate_words(m, {0, 0, 1});
  REQUIRE(w.rows() == 2);
  CHECK(w(0, 1) == std::max(m(0, 2), m(1, 2)));
  CHECK(w(0, 0) == 0.0);
  Eigen::MatrixXd raised = m;
  raised(0, 2) = raised(2, 0) = 9.0;
  CHECK((aggregate_words(raised, {0, 0, 1}).array() >= w.array()).all());
  CHECK_THROWS(aggregate_words(m, {0, 1}));
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  CHECK(aggregate_words(id, {0, 0, 1}) == Eigen::MatrixXd::Zero(2, 2));
}

TEST_CASE("method names") {
  for (Method m : {Method::Pmi, Method::CondPmi, Method::CondMi}) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS(method_from_string("mi"));
}

TEST_CASE("trained MLM: deterministic partner gives large conditional PMI") {
  // Sentences "a_k b_k c_m": the middle token is a function of the first.
  corpus::Vocab vocab;
  for (int k = 0; k < 5; ++k) vocab.add("a" + std::to_string(k));
  for (int k = 0; k < 5; ++k) vocab.add("b" + std::to_string(k));
  for (int k = 0; k < 5; ++k) vocab.add("c" + std::to_string(k));
  std::vector<Sentence> corpus;
  for (int k = 0; k < 5; ++k) {
    for (int m = 0; m < 5; ++m) {
      corpus::Text t = corpus::Text::from_words({"a" + std::to_string(k), "b" + std::to_string(k), "c" + std::to_string(m)});
      for (int rep = 0; rep < 4; ++rep) corpus.push_back(corpus::encode(vocab, t));
    }
  }
  mlm::Dims dims;
  dims.vocab = static_cast<int>(vocab.size());
  dims.hidden = 32;
  dims.ffn = 32;
  dims.max_len = 4;
  mlm::TinyMLM model(dims, 3);
  mlm::TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 10;
  cfg.lr = 3e-3;
  mlm::train_mlm(model, corpus, masking::MaskStrategy(masking::Uniform{0.3}), cfg);
  const MlmConditional conditional(model);
  double total = 0.0;
  for (int k = 0; k < 5; ++k) total += cond_pmi(conditional, corpus[k * 20].ids, 1, 0);
  CHECK(total / 5 > 1.0);
}

TEST_CASE("trained MLM: CondMI separates chain edges from non-edges") {
  // First-order Markov chain over 4 values: x_{k+1} = x_k with prob 0.7,
  // otherwise uniform. Non-adjacent pairs are conditionally independent.
  corpus::Vocab vocab;
  for (int v = 0; v < 4; ++v) vocab.add("s" + std::to_string(v));
  Rng rng(71);
  std::vector<Sentence> corpus;
  for (int n = 0; n < 1500; ++n) {
    std::vector<std::string> words;
    int x = static_cast<int>(rng.below(4));
    for (int k = 0; k < 5; ++k) {
      words.push_back("s" + std::to_string(x));
      if (!rng.bernoulli(0.7)) x = static_cast<int>(rng.below(4));
    }
    corpus.push_back(corpus::encode(vocab, corpus::Text::from_words(words)));
  }
  mlm::Dims dims;
  dims.vocab = static_cast<int>(vocab.size());
  dims.hidden = 32;
  dims.ffn = 32;
  dims.max_len = 5;
  mlm::TinyMLM model(dims, 5);
  mlm::TrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 3e-3;
  mlm::train_mlm(model, corpus, masking::MaskStrategy(masking::Uniform{0.3}), cfg);
  const MlmConditional conditional(model);
  EstimatorConfig est;
  est.gibbs_steps = 500;
  int separated = 0;
  constexpr int kSentences = 20;
  for (int s = 0; s < kSentences; ++s) {
    const auto d = dependence_matrix(conditional, corpus[s], Method::CondMi, est);
    double min_edge = 1e300, max_other = -1e300;
    for (int i = 0; i < 5; ++i) {
      for (int j = i + 1; j < 5; ++j) {
        if (j == i + 1) {
          min_edge = std::min(min_edge, d.scores(i, j));
        } else {
          max_other = std::max(max_other, d.scores(i, j));
        }
      }
    }
    separated += min_edge > max_other;
  }
  CHECK(separated >= 0.8 * kSentences);
}
