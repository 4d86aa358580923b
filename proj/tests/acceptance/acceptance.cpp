// Acceptance suite: one PASS/FAIL line per criterion. Exit code 0 iff every
// selected criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "depmine/dependence.hpp"
#include "depmine/experiments.hpp"
#include "depmine/mlm.hpp"
#include "depmine/oracle/gaussian.hpp"
#include "depmine/parsing.hpp"
#include "gradcheck.hpp"
#include "joint_tables.hpp"
#include "spanning_trees.hpp"

namespace fs = std::filesystem;
using namespace depmine;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o << std::setprecision(digits) << v;
  return o.str();
}

// ---- 1: gradients ----

Outcome gradients() {
  mlm::Dims d;
  d.vocab = 11;
  d.layers = 2;
  d.hidden = 8;
  d.heads = 2;
  d.ffn = 6;
  d.max_len = 7;
  double worst = 0.0;
  std::string worst_name;
  for (std::uint64_t b = 0; b < 20; ++b) {
    mlm::TinyMLM model(d, 100 + b);
    Rng rng(b);
    for (auto& t : model.params().tensors) {
      for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] += 0.3 * rng.normal();
    }
    // Two or three sequences of random length with a few masked positions.
    std::vector<mlm::MaskedExample> batch;
    const int n_seq = 2 + static_cast<int>(b % 2);
    for (int s = 0; s < n_seq; ++s) {
      const int len = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d.max_len - 2)));
      mlm::MaskedExample ex;
      for (int k = 0; k < len; ++k) ex.ids.push_back(4 + static_cast<int>(rng.below(7)));
      for (int k = 0; k < len; ++k) {
        if (k == 0 || rng.bernoulli(0.3)) {
          ex.positions.push_back(k);
          ex.targets.push_back(ex.ids[static_cast<std::size_t>(k)]);
          ex.ids[static_cast<std::size_t>(k)] = corpus::Vocab::kMask;
        }
      }
      batch.push_back(std::move(ex));
    }
    mlm::Params grad;
    mlm::mlm_loss_and_grad(model, batch, &grad);
    Rng probe(b);
    const auto checks = testing::finite_difference_check(
        model.params(), grad, [&] { return mlm::mlm_loss_and_grad(model, batch, nullptr); }, 1e-5, 0, probe);
    for (const auto& c : checks) {
      if (c.max_rel_error > worst) {
        worst = c.max_rel_error;
        worst_name = c.name;
      }
    }
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " (" + worst_name + ") over 20 batches"};
}

// ---- 2: estimator consistency ----

Outcome estimator() {
  Rng rng(2024);
  int within = 0, improved = 0;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto p = testing::random_table(3, 4, rng);
    const dependence::JointTableModel model(3, 4, p);
    const std::vector<int> ids = {static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4)),
                                  static_cast<int>(rng.below(4))};
    const double exact = testing::exact_pair_cmi(p, 4, ids, 0, 1);
    Rng small_rng(10 + t), big_rng(10 + t);
    const double err_small = std::abs(dependence::cond_mi(model, ids, 0, 1, 1000, small_rng) - exact);
    const double err_big = std::abs(dependence::cond_mi(model, ids, 0, 1, 100000, big_rng) - exact);
    worst = std::max(worst, err_big);
    within += err_big < 0.02 ? 1 : 0;
    improved += err_big < err_small ? 1 : 0;
  }
  return {within == 10 && improved >= 9, "within 0.02: " + std::to_string(within) + "/10, error(100k) < error(1k): " +
                                            std::to_string(improved) + "/10, max error " + fmt(worst)};
}

// ---- 3: bound sweeps ----

Outcome props(const fs::path& configs) {
  const auto cfg = experiments::load_config(configs / "verify_props.json");
  const auto t0 = Clock::now();
  const auto out = experiments::run_verify_props(cfg);
  const double secs = seconds_since(t0);
  const auto& p = cfg.props;
  const bool sizes = p.prop1_models >= 1000 && p.prop2_models >= 200 && p.prop2_samples >= 10000 &&
                     p.prop3_tables >= 1000 && p.prop4_pairs >= 1000;
  std::ostringstream d;
  d << "violations " << out.violations() << " (";
  for (std::size_t k = 0; k < out.trials.size(); ++k) d << (k ? " " : "") << out.trials[k].size();
  d << " trials), " << fmt(secs) << " s";
  return {sizes && out.violations() == 0 && secs < 600.0, d.str()};
}

// ---- 4: MST ----

Outcome mst_oracle() {
  Rng rng(4);
  int agree = 0;
  for (int t = 0; t < 500; ++t) {
    const int n = 2 + static_cast<int>(rng.below(5));
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = rng.normal();
    }
    double best = -1e300;
    for (const auto& tree : testing::all_spanning_trees(n)) {
      double v = 0.0;
      for (const auto& [a, b] : tree) v += s(a, b);
      best = std::max(best, v);
    }
    const auto pred = parsing::mst(s);
    if (corpus::is_spanning_tree(n, pred.edges) && std::abs(parsing::tree_score(s, pred) - best) <= 1e-12) ++agree;
  }
  return {agree == 500, std::to_string(agree) + "/500 matrices"};
}

// ---- 5: parsing ordering ----

Outcome parse_ordering(const fs::path& configs) {
  const auto cfg = experiments::load_config(configs / "parse_eval.json");
  const auto t0 = Clock::now();
  const auto out = experiments::run_parse_eval(cfg, [](const std::string& m) { std::cerr << "  " << m << "\n"; });
  const double secs = seconds_since(t0);
  const auto& t = out.table;
  const double cond_mi = 100.0 * t.mean("CondMI", "uuas");
  const double cond_pmi = 100.0 * t.mean("CondPMI", "uuas");
  const double pmi = 100.0 * t.mean("PMI", "uuas");
  const double random = 100.0 * t.mean("Random", "uuas");
  const bool setup = cfg.n_train >= 2000 && cfg.n_eval >= 300 && cfg.seeds.size() >= 3;
  const bool loss = out.mlm_final_loss < 0.6 * out.ln_vocab;
  const bool order = cond_mi >= pmi + 10.0 && cond_mi >= random + 20.0 && cond_mi >= cond_pmi;
  std::ostringstream d;
  d << "CondMI " << fmt(cond_mi) << " CondPMI " << fmt(cond_pmi) << " PMI " << fmt(pmi) << " Random "
    << fmt(random) << "; MLM loss " << fmt(out.mlm_final_loss) << " vs " << fmt(0.6 * out.ln_vocab) << "; "
    << fmt(secs) << " s";
  return {setup && loss && order && secs < 1800.0, d.str()};
}

// ---- 6: case-study trend ----

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
    for (std::size_t m = k; m <= e; ++m) r[idx[m]] = 0.5 * static_cast<double>(k + e) + 1.0;
    k = e + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

std::string p_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "Specific-%g", p);
  return buf;
}

Outcome case_study(const fs::path& configs) {
  const auto cfg = experiments::load_config(configs / "case_study.json");
  const auto t0 = Clock::now();
  const auto t = experiments::run_case_study(cfg);
  const double secs = seconds_since(t0);
  std::vector<double> accs;
  for (double p : cfg.p_values) accs.push_back(t.mean(p_label(p), "accuracy"));
  const double rho = spearman(cfg.p_values, accs);
  const double none = t.mean("NoPretrain", "accuracy");
  const double s100 = t.mean(p_label(100), "accuracy");
  const double s0 = t.mean(p_label(0), "accuracy");
  std::ostringstream d;
  d << "Specific-100 " << fmt(s100) << " NoPretrain " << fmt(none) << " Specific-0 " << fmt(s0) << " spearman "
    << fmt(rho) << "; " << fmt(secs) << " s";
  const bool setup = cfg.seeds.size() >= 10 && cfg.p_values.size() == 6;
  return {setup && s100 > none && s100 > s0 && rho >= 0.7 && secs < 1200.0, d.str()};
}

// ---- 7: mask-compare ordering ----

Outcome mask_compare(const fs::path& configs) {
  const auto cfg = experiments::load_config(configs / "mask_compare.json");
  const auto t0 = Clock::now();
  const auto t = experiments::run_mask_compare(cfg);
  const double secs = seconds_since(t0);
  const double cloze = t.mean("Cloze", "accuracy");
  const double uniform = t.mean("Uniform", "accuracy");
  const double vanilla = t.mean("Vanilla", "accuracy");
  const double nocloze = t.mean("NoCloze", "accuracy");
  std::ostringstream d;
  d << "Cloze " << fmt(cloze) << " Uniform " << fmt(uniform) << " NoCloze " << fmt(nocloze) << " Vanilla "
    << fmt(vanilla) << "; " << fmt(secs) << " s";
  const bool order = cloze >= uniform && uniform > vanilla && std::abs(uniform - nocloze) < std::abs(uniform - cloze);
  return {cfg.seeds.size() >= 20 && order && secs < 1800.0, d.str()};
}

// ---- 8: planted structure ----

oracle::GaussianModel planted_model(std::uint64_t seed) {
  oracle::GaussianSpec spec;
  spec.L = 5;
  spec.k = 1;
  spec.n_edges = 4;
  // Moderate partial correlations keep the lasso's irrepresentability
  // condition satisfied; at 0.8 some draws are unrecoverable for every lambda.
  spec.edge_scale = 0.4;
  spec.loading = oracle::Loading::Zero;
  spec.plant = oracle::Plant::Precision;
  spec.seed = seed;
  return oracle::gaussian_gen(spec);
}

int recovered_count(std::uint64_t first_seed, double lambda) {
  int recovered = 0;
  for (std::uint64_t s = first_seed; s < first_seed + 10; ++s) {
    const auto m = planted_model(s);
    Rng rng(s + 100);
    if (oracle::neighborhood_select(oracle::sample(m, 100000, rng).x, lambda) == m.graph) ++recovered;
  }
  return recovered;
}

// lambda <= 0 selects the penalty on a separate set of tuning seeds.
Outcome planted(double lambda) {
  const auto t0 = Clock::now();
  if (!(lambda > 0.0)) {
    // Middle of the grid points that tie for the best tuning recovery.
    const std::vector<double> grid = {0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3};
    std::vector<int> counts;
    for (double candidate : grid) counts.push_back(recovered_count(700, candidate));
    const int best = *std::max_element(counts.begin(), counts.end());
    std::vector<double> ties;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (counts[k] == best) ties.push_back(grid[k]);
    }
    lambda = ties[ties.size() / 2];
  }
  const int recovered = recovered_count(800, lambda);
  double worst_nonedge = 0.0;
  for (std::uint64_t s = 800; s < 810; ++s) {
    const auto m = planted_model(s);
    for (int a = 0; a < 5; ++a) {
      for (int b = a + 1; b < 5; ++b) {
        if (m.graph.count({a, b}) == 0) {
          worst_nonedge = std::max(worst_nonedge, std::abs(oracle::gaussian_cond_mi(m.cov(), a, b)));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << recovered << "/10 graphs at lambda " << lambda << ", max non-edge CondMI " << worst_nonedge << "; " << fmt(secs)
    << " s";
  return {recovered == 10 && worst_nonedge < 1e-10 && secs < 120.0, d.str()};
}

// ---- 9: determinism ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs one experiment into `dir` the way the CLI does.
void run_into(const experiments::ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  using experiments::ChartKind;
  if (cfg.experiment == "case-study") {
    experiments::emit_outputs(experiments::run_case_study(cfg), dir, "accuracy", ChartKind::Line);
  } else if (cfg.experiment == "mask-compare") {
    experiments::emit_outputs(experiments::run_mask_compare(cfg), dir, "accuracy", ChartKind::Bars);
  } else if (cfg.experiment == "parse-eval") {
    experiments::emit_outputs(experiments::run_parse_eval(cfg).table, dir, "uuas", ChartKind::Bars);
  } else if (cfg.experiment == "relations") {
    std::ofstream(dir / "relations.csv") << experiments::run_relations(cfg).to_csv();
  } else {
    const auto out = experiments::run_verify_props(cfg);
    for (std::size_t k = 0; k < out.trials.size(); ++k) {
      std::ofstream(dir / ("prop" + std::to_string(k + 1) + ".csv")) << experiments::props_csv(out.trials[k]);
    }
    experiments::emit_outputs(out.table, dir, "violations", ChartKind::Bars);
  }
}

Outcome determinism(const fs::path& configs) {
  const fs::path root = fs::temp_directory_path() / "depmine_acceptance_determinism";
  fs::remove_all(root);
  int compared = 0, identical = 0;
  std::string mismatch;
  for (const char* name : {"case_study", "mask_compare", "parse_eval", "relations", "verify_props"}) {
    const auto cfg = experiments::load_config(configs / "determinism" / (std::string(name) + ".json"));
    run_into(cfg, root / name / "a");
    run_into(cfg, root / name / "b");
    for (const auto& entry : fs::directory_iterator(root / name / "a")) {
      const auto ext = entry.path().extension();
      if (ext != ".csv" && ext != ".json") continue;
      ++compared;
      if (slurp(entry.path()) == slurp(root / name / "b" / entry.path().filename())) {
        ++identical;
      } else {
        mismatch += std::string(" ") + name + "/" + entry.path().filename().string();
      }
    }
  }
  fs::remove_all(root);
  return {compared > 0 && identical == compared,
          std::to_string(identical) + "/" + std::to_string(compared) + " files identical" + mismatch};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path configs = DEPMINE_CONFIG_DIR;
  std::vector<int> only;
  double lambda = 0.0;
  app.add_option("--configs", configs, "directory with the experiment configs")->check(CLI::ExistingDirectory);
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--lambda", lambda, "lasso penalty for the planted-structure check (default: tuned on held-out seeds)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"estimator consistency", estimator},
      {"bound sweeps", [&] { return props(configs); }},
      {"MST oracle equivalence", mst_oracle},
      {"parsing ordering", [&] { return parse_ordering(configs); }},
      {"case-study trend", [&] { return case_study(configs); }},
      {"mask-compare ordering", [&] { return mask_compare(configs); }},
      {"planted-structure recovery", [&] { return planted(lambda); }},
      {"determinism", [&] { return determinism(configs); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && selected.count(id) == 0) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[k].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
