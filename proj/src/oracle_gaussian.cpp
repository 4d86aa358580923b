#include "depmine/oracle/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace depmine::oracle {

namespace {

double op_norm_sym(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Descending eigenvalues of a symmetric matrix.
VectorXd eigenvalues_desc(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

MatrixXd drop_index(const MatrixXd& m, int i) {
  const auto n = m.rows();
  MatrixXd out(n - 1, m.cols());
  for (Eigen::Index r = 0, o = 0; r < n; ++r) {
    if (r != i) out.row(o++) = m.row(r);
  }
  return out;
}

MatrixXd drop_row_col(const MatrixXd& m, int i) {
  MatrixXd rows = drop_index(m, i);
  return drop_index(rows.transpose(), i).transpose();
}

VectorXd column_without(const MatrixXd& m, int i) {
  VectorXd out(m.rows() - 1);
  for (Eigen::Index r = 0, o = 0; r < m.rows(); ++r) {
    if (r != i) out(o++) = m(r, i);
  }
  return out;
}

// Row vector b solving b * M = rhs for SPD M.
VectorXd solve_spd(const MatrixXd& m, const VectorXd& rhs) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::domain_error("covariance submatrix is singular");
  return llt.solve(rhs);
}

void check_index(const GaussianModel& model, int i) {
  if (i < 0 || i >= model.L()) throw std::out_of_range("coordinate index outside model");
}

}  // namespace

GaussianModel gaussian_gen(const GaussianSpec& spec) {
  const int L = spec.L;
  const int k = spec.k;
  if (L < 3 || k < 1) throw std::invalid_argument("gaussian_gen: need L >= 3 and k >= 1");
  if (spec.n_edges < 0 || spec.n_edges > L * (L - 1) / 2) throw std::invalid_argument("gaussian_gen: n_edges out of range");
  if (spec.loading == Loading::Orthonormal && k > L) throw std::invalid_argument("gaussian_gen: orthonormal A needs k <= L");
  if (!(spec.noise_var > 0.0) || !(spec.latent_var > 0.0)) throw std::invalid_argument("gaussian_gen: variances must be positive");
  Rng rng = Rng(spec.seed).split(41);

  GaussianModel model;
  model.A = MatrixXd::Zero(L, k);
  if (spec.loading != Loading::Zero) {
    for (int r = 0; r < L; ++r) {
      for (int c = 0; c < k; ++c) model.A(r, c) = rng.normal();
    }
    if (spec.loading == Loading::Orthonormal) {
      Eigen::HouseholderQR<MatrixXd> qr(model.A);
      model.A = qr.householderQ() * MatrixXd::Identity(L, k);
    }
  }
  model.sigma_zz = spec.latent_var * MatrixXd::Identity(k, k);

  std::vector<corpus::Edge> pairs;
  for (int a = 0; a < L; ++a) {
    for (int b = a + 1; b < L; ++b) pairs.emplace_back(a, b);
  }
  for (int e = 0; e < spec.n_edges; ++e) {
    std::swap(pairs[static_cast<std::size_t>(e)], pairs[e + rng.below(pairs.size() - static_cast<std::size_t>(e))]);
  }
  MatrixXd planted = MatrixXd::Identity(L, L);
  for (int e = 0; e < spec.n_edges; ++e) {
    const auto [a, b] = pairs[static_cast<std::size_t>(e)];
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double w = sign * rng.uniform(0.5, 1.0) * spec.edge_scale;
    planted(a, b) = planted(b, a) = w;
    model.graph.insert({a, b});
  }
  const double lambda_min = eigenvalues_desc(planted).minCoeff();
  constexpr double kMinEigen = 0.1;
  if (lambda_min < kMinEigen) planted.diagonal().array() += kMinEigen - lambda_min;
  if (spec.plant == Plant::Precision) planted = planted.inverse().eval();
  model.sigma_xx = spec.noise_var * planted;
  model.sigma_xx = (0.5 * (model.sigma_xx + model.sigma_xx.transpose())).eval();

  if (Eigen::LLT<MatrixXd>(model.sigma_xx).info() != Eigen::Success ||
      Eigen::LLT<MatrixXd>(model.cov()).info() != Eigen::Success) {
    throw std::domain_error("gaussian_gen: positive-definite repair failed");
  }
  return model;
}

GaussianModel gaussian_gen(int L, int k, int n_edges, double scale, std::uint64_t seed) {
  GaussianSpec spec;
  spec.L = L;
  spec.k = k;
  spec.n_edges = n_edges;
  spec.edge_scale = scale;
  spec.seed = seed;
  return gaussian_gen(spec);
}

VectorXd masked_beta(const GaussianModel& model, int i) {
  check_index(model, i);
  const MatrixXd cov = model.cov();
  return solve_spd(drop_row_col(cov, i), column_without(cov, i));
}

VectorXd two_stage_beta(const GaussianModel& model, int i) {
  check_index(model, i);
  const MatrixXd a_rest = drop_index(model.A, i);
  const VectorXd cross = a_rest * model.sigma_zz * model.A.row(i).transpose();
  const MatrixXd m = a_rest * model.sigma_zz * a_rest.transpose() + drop_row_col(model.sigma_xx, i);
  return solve_spd(m, cross);
}

PropReport prop1_check(const GaussianModel& model, int i) {
  PropReport r;
  r.lhs = (masked_beta(model, i) - two_stage_beta(model, i)).norm();
  const double inv_op = 1.0 / eigenvalues_desc(model.cov()).minCoeff();
  r.rhs = column_without(model.sigma_xx, i).norm() * inv_op;
  std::ostringstream d;
  d << "i=" << i;
  r.detail = d.str();
  return r;
}

GaussianSample sample(const GaussianModel& model, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const MatrixXd lz = Eigen::LLT<MatrixXd>(model.sigma_zz).matrixL();
  const MatrixXd lx = Eigen::LLT<MatrixXd>(model.sigma_xx).matrixL();
  GaussianSample s;
  s.z.resize(n, model.k());
  s.x.resize(n, model.L());
  VectorXd gz(model.k()), gx(model.L());
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < model.k(); ++c) gz(c) = rng.normal();
    for (int c = 0; c < model.L(); ++c) gx(c) = rng.normal();
    const VectorXd z = lz * gz;
    s.z.row(t) = z.transpose();
    s.x.row(t) = (model.A * z + lx * gx).transpose();
  }
  return s;
}

PcaResult pca_project(const GaussianModel& model, const MatrixXd& samples, int k) {
  if (k < 1 || k > model.L()) throw std::invalid_argument("pca_project: k must lie in 1..L");
  if (samples.cols() != model.L()) throw std::invalid_argument("pca_project: sample width differs from L");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(model.cov());
  if (es.info() != Eigen::Success) throw std::domain_error("pca_project: eigendecomposition failed");
  PcaResult r;
  r.eigenvalues = es.eigenvalues().reverse();
  r.V = es.eigenvectors().rowwise().reverse().leftCols(k);
  const MatrixXd proj = r.V * r.V.transpose();
  r.projected = samples * proj;  // proj is symmetric
  const VectorXd signal = eigenvalues_desc(model.A * model.sigma_zz * model.A.transpose());
  const VectorXd noise = eigenvalues_desc(model.sigma_xx);
  r.lambda_k = signal(k - 1);
  r.lambda_noise_k1 = k < model.L() ? noise(k) : 0.0;
  return r;
}

PropReport prop2_check(const GaussianModel& model, int n_samples, std::uint64_t seed) {
  Rng rng = Rng(seed).split(43);
  const GaussianSample s = sample(model, n_samples, rng);
  const PcaResult pca = pca_project(model, s.x, model.k());
  PropReport r;
  if (pca.vacuous()) {
    r.vacuous = true;
    r.detail = "bound vacuous: eigengap not positive";
    return r;
  }
  const double noise_op = op_norm_sym(model.sigma_xx);
  const double root_trace = std::sqrt(model.sigma_xx.trace());
  const double aat_op = op_norm_sym(model.A * model.A.transpose());
  const double factor = std::sqrt(2.0) * noise_op / (pca.lambda_k - pca.lambda_noise_k1);
  const MatrixXd az = s.z * model.A.transpose();
  double lhs = 0.0;
  double rhs = 0.0;
  int per_sample_holds = 0;
  for (int t = 0; t < n_samples; ++t) {
    const double err = (az.row(t) - pca.projected.row(t)).norm();
    const double bound = factor * (az.row(t).norm() + root_trace) + aat_op * root_trace;
    lhs += err;
    rhs += bound;
    per_sample_holds += err <= bound ? 1 : 0;
  }
  r.lhs = lhs / n_samples;
  r.rhs = rhs / n_samples;
  std::ostringstream d;
  d << "per_sample_holds=" << per_sample_holds << "/" << n_samples;
  r.detail = d.str();
  return r;
}

double gaussian_cond_mi(const MatrixXd& cov, int i, int j) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("gaussian_cond_mi: covariance must be square");
  if (i < 0 || j < 0 || i >= cov.rows() || j >= cov.rows() || i == j) {
    throw std::invalid_argument("gaussian_cond_mi: invalid coordinate pair");
  }
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::domain_error("gaussian_cond_mi: covariance is not positive definite");
  const MatrixXd theta = llt.solve(MatrixXd::Identity(cov.rows(), cov.cols()));
  const double t_ij = 0.5 * (theta(i, j) + theta(j, i));
  const double rho = -t_ij / std::sqrt(theta(i, i) * theta(j, j));
  if (!(std::abs(rho) < 1.0)) throw std::domain_error("gaussian_cond_mi: |partial correlation| >= 1");
  return -0.5 * std::log1p(-rho * rho);
}

VectorXd lasso(const MatrixXd& X, const VectorXd& y, double lambda, const LassoOptions& opts) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n) throw std::invalid_argument("lasso: row count mismatch");
  if (lambda < 0.0) throw std::invalid_argument("lasso: lambda must be non-negative");
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const MatrixXd xc = X.rowwise() - x_mean;
  const VectorXd yc = y.array() - y.mean();
  const MatrixXd gram = xc.transpose() * xc / static_cast<double>(n);
  const VectorXd corr = xc.transpose() * yc / static_cast<double>(n);

  VectorXd beta = VectorXd::Zero(p);
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index c = 0; c < p; ++c) {
      if (!(gram(c, c) > 0.0)) continue;
      const double partial = corr(c) - gram.row(c).dot(beta) + gram(c, c) * beta(c);
      const double shrunk = std::copysign(std::max(std::abs(partial) - lambda, 0.0), partial);
      const double updated = shrunk / gram(c, c);
      max_change = std::max(max_change, std::abs(updated - beta(c)));
      beta(c) = updated;
    }
    if (max_change < opts.tol) return beta;
  }
  throw LassoDiverged(opts.max_sweeps);
}

std::set<corpus::Edge> neighborhood_select(const MatrixXd& samples, double lambda, const LassoOptions& opts) {
  const auto n = samples.rows();
  const auto L = static_cast<int>(samples.cols());
  if (n <= L) throw std::invalid_argument("neighborhood_select: need more samples than variables");
  std::set<corpus::Edge> edges;
  for (int i = 0; i < L; ++i) {
    MatrixXd rest(n, L - 1);
    for (int c = 0, o = 0; c < L; ++c) {
      if (c != i) rest.col(o++) = samples.col(c);
    }
    const VectorXd beta = lasso(rest, samples.col(i), lambda, opts);
    for (int c = 0, o = 0; c < L; ++c) {
      if (c == i) continue;
      if (beta(o++) != 0.0) edges.insert(corpus::make_edge(i, c));
    }
  }
  return edges;
}

}  // namespace depmine::oracle
