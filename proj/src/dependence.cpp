#include "depmine/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace depmine::dependence {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_pair(std::span<const int> ids, int i, int j) {
  const auto n = static_cast<int>(ids.size());
  if (i < 0 || j < 0 || i >= n || j >= n) throw std::out_of_range("position outside sentence");
  if (i == j) throw std::invalid_argument("positions must differ");
}

double safe_log(double p) { return std::log(std::max(p, std::numeric_limits<double>::min())); }

}  // namespace

// ---------------------------------------------------------------- models

JointTableModel::JointTableModel(int length, int n_values, std::vector<double> probs)
    : length_(length), n_values_(n_values), probs_(std::move(probs)) {
  if (length < 1 || n_values < 1) throw std::invalid_argument("joint table needs positive sizes");
  std::size_t expected = 1;
  for (int k = 0; k < length; ++k) expected *= static_cast<std::size_t>(n_values);
  if (probs_.size() != expected) throw std::invalid_argument("joint table has the wrong number of entries");
  double total = 0.0;
  for (double v : probs_) {
    if (!(v >= 0.0)) throw std::invalid_argument("joint table has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("joint table is not normalized");
}

VectorXd JointTableModel::predict(std::span<const int> ids, int position) const {
  if (static_cast<int>(ids.size()) != length_) throw std::invalid_argument("joint table query has the wrong length");
  if (position < 0 || position >= length_) throw std::out_of_range("joint table query position");
  VectorXd out = VectorXd::Zero(n_values_);
  std::vector<int> digits(static_cast<std::size_t>(length_), 0);
  for (std::size_t flat = 0; flat < probs_.size(); ++flat) {
    bool consistent = true;
    for (int k = 0; k < length_ && consistent; ++k) {
      if (k != position && ids[k] != n_values_ && ids[k] != digits[k]) consistent = false;
    }
    if (consistent) out(digits[position]) += probs_[flat];
    for (int k = length_ - 1; k >= 0; --k) {
      if (++digits[k] < n_values_) break;
      digits[k] = 0;
    }
  }
  const double total = out.sum();
  if (!(total > 0.0)) throw std::domain_error("conditioning context has zero probability");
  return out / total;
}

const VectorXd& QueryCache::get(const std::vector<int>& ids, int position) {
  auto key = std::make_pair(ids, position);
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;
  ++calls_;
  VectorXd probs = model_.predict(ids, position);
  return memo_.emplace(std::move(key), std::move(probs)).first->second;
}

// ---------------------------------------------------------------- Gibbs

GibbsChain gibbs_chain(const ConditionalModel& model, std::span<const int> ids, int i, int j, int steps, Rng& rng,
                       QueryCache* cache, int burn_in) {
  check_pair(ids, i, j);
  if (steps < 1) throw std::invalid_argument("gibbs_chain: steps must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("gibbs_chain: negative burn-in");
  QueryCache local(model);
  QueryCache& memo = cache ? *cache : local;

  GibbsChain chain;
  chain.i = i;
  chain.j = j;
  chain.context.assign(ids.begin(), ids.end());
  chain.context[static_cast<std::size_t>(i)] = model.mask_id();
  chain.context[static_cast<std::size_t>(j)] = model.mask_id();
  chain.samples.reserve(static_cast<std::size_t>(steps));

  std::vector<int> x = chain.context;
  for (int t = 0; t < burn_in + steps; ++t) {
    x[static_cast<std::size_t>(i)] = model.mask_id();
    const VectorXd& pi = memo.get(x, i);
    const int xi = static_cast<int>(rng.categorical(std::span<const double>(pi.data(), static_cast<std::size_t>(pi.size()))));
    x[static_cast<std::size_t>(i)] = xi;
    x[static_cast<std::size_t>(j)] = model.mask_id();
    const VectorXd& pj = memo.get(x, j);
    const int xj = static_cast<int>(rng.categorical(std::span<const double>(pj.data(), static_cast<std::size_t>(pj.size()))));
    x[static_cast<std::size_t>(j)] = xj;
    if (t >= burn_in) chain.samples.emplace_back(xi, xj);
  }
  return chain;
}

CondMiEstimate cond_mi_from_chain(const ConditionalModel& model, const GibbsChain& chain, QueryCache* cache) {
  if (chain.samples.empty()) throw std::invalid_argument("cond_mi: chain has no samples");
  QueryCache local(model);
  QueryCache& memo = cache ? *cache : local;
  const auto t_total = static_cast<double>(chain.samples.size());

  std::map<int, double> count_i, count_j;
  std::map<std::pair<int, int>, double> count_pair;
  for (const auto& [a, b] : chain.samples) {
    count_i[a] += 1.0;
    count_j[b] += 1.0;
    count_pair[{a, b}] += 1.0;
  }

  // p(x_target | context with partner set to v), target masked.
  auto conditional = [&](int target, int partner, int v) -> const VectorXd& {
    std::vector<int> x = chain.context;
    x[static_cast<std::size_t>(partner)] = v;
    return memo.get(x, target);
  };

  CondMiEstimate est;
  for (const auto& [ab, n_ab] : count_pair) {
    const auto [a, b] = ab;
    double mix_i = 0.0;
    for (const auto& [v, c] : count_j) mix_i += c / t_total * conditional(chain.i, chain.j, v)(a);
    est.i_given_j += n_ab / t_total * (safe_log(conditional(chain.i, chain.j, b)(a)) - safe_log(mix_i));
    double mix_j = 0.0;
    for (const auto& [u, c] : count_i) mix_j += c / t_total * conditional(chain.j, chain.i, u)(b);
    est.j_given_i += n_ab / t_total * (safe_log(conditional(chain.j, chain.i, a)(b)) - safe_log(mix_j));
  }
  return est;
}

double cond_mi(const ConditionalModel& model, std::span<const int> ids, int i, int j, int steps, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("cond_mi: steps must be >= 1");
  QueryCache cache(model);
  const GibbsChain chain = gibbs_chain(model, ids, i, j, steps, rng, &cache);
  return cond_mi_from_chain(model, chain, &cache).i_given_j;
}

double cond_pmi(const ConditionalModel& model, std::span<const int> ids, int i, int j) {
  check_pair(ids, i, j);
  std::vector<int> x(ids.begin(), ids.end());
  const int observed = x[static_cast<std::size_t>(i)];
  if (observed < 0 || observed >= model.vocab_size()) throw std::invalid_argument("cond_pmi: observed token outside model vocabulary");
  x[static_cast<std::size_t>(i)] = model.mask_id();
  const double with_j = model.predict(x, i)(observed);
  x[static_cast<std::size_t>(j)] = model.mask_id();
  const double without_j = model.predict(x, i)(observed);
  return safe_log(with_j) - safe_log(without_j);
}

// ---------------------------------------------------------------- PMI

PmiTable::PmiTable(const std::vector<corpus::Sentence>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("PmiTable: empty corpus");
  std::map<std::pair<int, int>, double> pair_counts;
  for (const auto& s : corpus) {
    const auto n = s.ids.size();
    for (std::size_t a = 0; a < n; ++a) {
      unigram_[s.ids[a]] += 1.0;
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b) pair_counts[{s.ids[a], s.ids[b]}] += 1.0;
      }
    }
    n_tokens_ += static_cast<double>(n);
    n_pairs_ += static_cast<double>(n * (n - 1));
  }
  joint_ = std::move(pair_counts);
}

double PmiTable::pmi(int a, int b) const {
  const auto ia = unigram_.find(a);
  const auto ib = unigram_.find(b);
  if (ia == unigram_.end() || ib == unigram_.end()) return 0.0;
  const auto jt = joint_.find({a, b});
  const double joint_count = jt == joint_.end() ? 0.0 : jt->second;
  const auto v = static_cast<double>(unigram_.size());
  const double p_ab = (joint_count + 1.0) / (n_pairs_ + v * v);
  const double p_a = ia->second / n_tokens_;
  const double p_b = ib->second / n_tokens_;
  return std::log(p_ab / (p_a * p_b));
}

// ---------------------------------------------------------------- matrices

std::string to_string(Method m) {
  switch (m) {
    case Method::Pmi: return "pmi";
    case Method::CondPmi: return "condpmi";
    case Method::CondMi: return "condmi";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "pmi") return Method::Pmi;
  if (s == "condpmi") return Method::CondPmi;
  if (s == "condmi") return Method::CondMi;
  throw std::invalid_argument("unknown dependence method '" + s + "'");
}

std::string DependenceMatrix::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["method"] = to_string(method);
  std::vector<double> flat;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) flat.push_back(scores(r, c));
  }
  j["scores"] = flat;
  j["meta"] = {{"gibbs_steps", gibbs_steps}, {"seed", seed}};
  return j.dump();
}

MatrixXd aggregate_words(const MatrixXd& scores, const std::vector<int>& word_map) {
  if (scores.rows() != scores.cols() || static_cast<std::size_t>(scores.rows()) != word_map.size()) {
    throw std::invalid_argument("aggregate_words: dimension mismatch");
  }
  corpus::validate_word_map(word_map);
  const int n_words = word_map.empty() ? 0 : word_map.back() + 1;
  MatrixXd out = MatrixXd::Constant(n_words, n_words, -std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < word_map.size(); ++a) {
    for (std::size_t b = 0; b < word_map.size(); ++b) {
      const int u = word_map[a];
      const int w = word_map[b];
      if (u != w) out(u, w) = std::max(out(u, w), scores(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
  }
  out.diagonal().setZero();
  return out;
}

DependenceMatrix dependence_matrix(const PmiTable& table, const corpus::Sentence& sentence) {
  const auto n = static_cast<int>(sentence.ids.size());
  if (n < 2) throw std::invalid_argument("dependence_matrix: sentence needs at least two tokens");
  MatrixXd s = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = table.pmi(sentence.ids[i], sentence.ids[j]);
  }
  DependenceMatrix out;
  out.scores = aggregate_words(s, sentence.word_map);
  out.n = static_cast<int>(out.scores.rows());
  out.method = Method::Pmi;
  return out;
}

DependenceMatrix dependence_matrix(const ConditionalModel& model, const corpus::Sentence& sentence, Method method,
                                   const EstimatorConfig& cfg) {
  if (method == Method::Pmi) throw std::invalid_argument("PMI needs a PmiTable, not a model");
  const auto n = static_cast<int>(sentence.ids.size());
  if (n < 2) throw std::invalid_argument("dependence_matrix: sentence needs at least two tokens");
  MatrixXd s = MatrixXd::Zero(n, n);
  QueryCache cache(model);
  const Rng base(cfg.seed);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double value = 0.0;
      if (method == Method::CondPmi) {
        value = 0.5 * (cond_pmi(model, sentence.ids, i, j) + cond_pmi(model, sentence.ids, j, i));
      } else {
        Rng rng = base.split(static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(j));
        const GibbsChain chain = gibbs_chain(model, sentence.ids, i, j, cfg.gibbs_steps, rng, &cache, cfg.burn_in);
        value = cond_mi_from_chain(model, chain, &cache).symmetric();
      }
      if (!std::isfinite(value)) throw std::domain_error("non-finite dependence score");
      s(i, j) = s(j, i) = value;
    }
  }
  DependenceMatrix out;
  out.scores = aggregate_words(s, sentence.word_map);
  out.n = static_cast<int>(out.scores.rows());
  out.method = method;
  if (method == Method::CondMi) {
    out.gibbs_steps = cfg.gibbs_steps;
    out.seed = cfg.seed;
  }
  return out;
}

}  // namespace depmine::dependence
