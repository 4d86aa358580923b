#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "depmine/corpus.hpp"
#include "depmine/dependence.hpp"
#include "depmine/mlm.hpp"
#include "depmine/parsing.hpp"

namespace depmine::experiments {

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 2;
  int ffn = 64;
  int max_len = 32;

  mlm::Dims dims(int vocab) const;
};

struct PropsConfig {
  int prop1_models = 1000;
  int prop2_models = 200;
  int prop2_samples = 10000;
  int prop3_tables = 1000;
  int prop4_pairs = 1000;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds = {0};

  // parse-eval / relations
  corpus::GrammarConfig grammar;
  int n_train = 2000;
  int n_eval = 300;
  std::string mask = "uniform:0.15";
  dependence::EstimatorConfig estimator;
  std::uint64_t model_seed = 0;
  int relation_sentences = 5000;
  std::filesystem::path conllu_train;  // optional replacement for the synthetic grammar
  std::filesystem::path conllu_eval;

  // case-study / mask-compare
  std::uint64_t data_seed = 0;
  int n_sentences = 2000;
  int finetune_examples = 20;
  int dev_examples = 500;
  std::vector<double> p_values = {0, 20, 40, 60, 80, 100};
  std::filesystem::path lexicon;  // empty: built-in sentiment lexicon
  bool cloze_all_positions = false;

  ModelConfig model;
  mlm::TrainConfig pretrain;
  mlm::TrainConfig finetune;
  PropsConfig props;

  void validate() const;
};

/// Reads a JSON config; missing keys keep their defaults.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);
/// Parses "0..9" or "1,4,7".
std::vector<std::uint64_t> parse_seeds(const std::string& text);

struct ResultRow {
  std::string condition;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct AggregateRow {
  std::string condition;
  std::string metric;
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * sd / sqrt(n)
  std::size_t n = 0;
};

class ResultTable {
 public:
  explicit ResultTable(std::string experiment = {}) : experiment_(std::move(experiment)) {}

  /// Throws if (condition, seed, metric) is already present.
  void add(const std::string& condition, std::uint64_t seed, const std::string& metric, double value);
  const std::vector<ResultRow>& rows() const { return rows_; }
  const std::string& experiment() const { return experiment_; }
  /// Conditions in first-insertion order.
  std::vector<std::string> conditions() const;
  std::vector<AggregateRow> aggregates() const;
  double mean(const std::string& condition, const std::string& metric) const;

  std::string to_csv() const;
  std::string to_json() const;

 private:
  std::string experiment_;
  std::vector<ResultRow> rows_;
};

enum class ChartKind { Line, Bars };

/// Timestamp-free SVG chart of one metric's aggregate rows with CI whiskers.
std::string render_svg(const ResultTable& table, const std::string& metric, ChartKind kind, const std::string& title);

/// Writes results.csv, results.json and chart.svg into `dir`.
void emit_outputs(const ResultTable& table, const std::filesystem::path& dir, const std::string& metric,
                  ChartKind kind);

using Progress = std::function<void(const std::string&)>;

ResultTable run_case_study(const ExperimentConfig& cfg, const Progress& progress = {});
ResultTable run_mask_compare(const ExperimentConfig& cfg, const Progress& progress = {});

struct ParseEvalOutput {
  ResultTable table{"parse-eval"};
  double mlm_final_loss = 0.0;
  double ln_vocab = 0.0;
  std::vector<corpus::TreeExample> eval;
  /// CondMI predictions for the first seed, aligned with `eval`.
  std::vector<parsing::ParseTree> condmi_trees;
};
ParseEvalOutput run_parse_eval(const ExperimentConfig& cfg, const Progress& progress = {});

parsing::RelationReport run_relations(const ExperimentConfig& cfg, const Progress& progress = {});

struct PropTrial {
  int trial = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool vacuous = false;
  double slack() const { return rhs - lhs; }
  bool holds() const { return vacuous || slack() >= -1e-9; }
};

struct PropsOutput {
  std::vector<std::vector<PropTrial>> trials;  // index 0..3 for propositions 1..4
  ResultTable table{"verify-props"};
  std::size_t violations() const;
};
PropsOutput run_verify_props(const ExperimentConfig& cfg, const Progress& progress = {});
std::string props_csv(const std::vector<PropTrial>& trials);

}  // namespace depmine::experiments
