#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "depmine/corpus.hpp"
#include "depmine/mlm.hpp"
#include "depmine/rng.hpp"

namespace depmine::dependence {

/// Source of conditionals p(x_pos | ids), where ids carries the mask id at
/// `pos` and possibly at other positions.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual int vocab_size() const = 0;
  virtual int mask_id() const = 0;
  virtual Eigen::VectorXd predict(std::span<const int> ids, int position) const = 0;
};

class MlmConditional final : public ConditionalModel {
 public:
  explicit MlmConditional(const mlm::TinyMLM& model) : model_(model) {}
  int vocab_size() const override { return model_.dims().vocab; }
  int mask_id() const override { return corpus::Vocab::kMask; }
  Eigen::VectorXd predict(std::span<const int> ids, int position) const override {
    return model_.predict(ids, position);
  }

 private:
  const mlm::TinyMLM& model_;
};

/// Exact conditionals of an explicit joint table over L positions with V
/// values each. The mask id is V; masked positions are marginalized out.
class JointTableModel final : public ConditionalModel {
 public:
  /// `probs` has V^L entries indexed with position 0 most significant.
  JointTableModel(int length, int n_values, std::vector<double> probs);
  int vocab_size() const override { return n_values_; }
  int mask_id() const override { return n_values_; }
  Eigen::VectorXd predict(std::span<const int> ids, int position) const override;

  int length() const { return length_; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  int length_;
  int n_values_;
  std::vector<double> probs_;
};

/// Memo of model queries keyed by the full query context (with the queried
/// position already masked) plus the position.
class QueryCache {
 public:
  explicit QueryCache(const ConditionalModel& model) : model_(model) {}
  const Eigen::VectorXd& get(const std::vector<int>& ids, int position);
  std::size_t size() const { return memo_.size(); }
  std::size_t model_calls() const { return calls_; }

 private:
  const ConditionalModel& model_;
  std::map<std::pair<std::vector<int>, int>, Eigen::VectorXd> memo_;
  std::size_t calls_ = 0;
};

struct GibbsChain {
  std::vector<int> context;  // sentence with positions i and j masked
  int i = 0;
  int j = 0;
  std::vector<std::pair<int, int>> samples;  // (x_i^t, x_j^t)
};

/// Alternating two-site Gibbs sampler started from the doubly-masked context.
GibbsChain gibbs_chain(const ConditionalModel& model, std::span<const int> ids, int i, int j, int steps, Rng& rng,
                       QueryCache* cache = nullptr, int burn_in = 0);

struct CondMiEstimate {
  double i_given_j = 0.0;  // estimate built from conditionals of x_i
  double j_given_i = 0.0;  // estimate built from conditionals of x_j
  double symmetric() const { return 0.5 * (i_given_j + j_given_i); }
};

/// Plug-in conditional MI estimates from one chain. The inner expectation
/// uses the chain's own marginal samples of the partner position.
CondMiEstimate cond_mi_from_chain(const ConditionalModel& model, const GibbsChain& chain, QueryCache* cache = nullptr);

/// Runs a chain and returns the x_i-side estimate.
double cond_mi(const ConditionalModel& model, std::span<const int> ids, int i, int j, int steps, Rng& rng);

/// log p(x_i | X without i) - log p(x_i | X without i and j), at the observed tokens.
double cond_pmi(const ConditionalModel& model, std::span<const int> ids, int i, int j);

/// Type-level PMI from within-sentence co-occurrence of token positions.
class PmiTable {
 public:
  explicit PmiTable(const std::vector<corpus::Sentence>& corpus);
  /// 0 when either type never occurred.
  double pmi(int a, int b) const;
  std::size_t n_types() const { return unigram_.size(); }

 private:
  std::unordered_map<int, double> unigram_;
  std::map<std::pair<int, int>, double> joint_;
  double n_tokens_ = 0.0;
  double n_pairs_ = 0.0;
};

enum class Method { Pmi, CondPmi, CondMi };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct EstimatorConfig {
  int gibbs_steps = 2000;
  int burn_in = 0;
  std::uint64_t seed = 0;
};

struct DependenceMatrix {
  int n = 0;
  Eigen::MatrixXd scores;
  Method method = Method::Pmi;
  int gibbs_steps = 0;
  std::uint64_t seed = 0;

  /// JSON {n, method, scores (row-major), meta}.
  std::string to_json() const;
};

/// Word-level matrix from subword scores: entry (u, w) is the max over
/// subword pairs mapping to u and w.
Eigen::MatrixXd aggregate_words(const Eigen::MatrixXd& scores, const std::vector<int>& word_map);

DependenceMatrix dependence_matrix(const PmiTable& table, const corpus::Sentence& sentence);
DependenceMatrix dependence_matrix(const ConditionalModel& model, const corpus::Sentence& sentence, Method method,
                                   const EstimatorConfig& cfg);

}  // namespace depmine::dependence
