#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "depmine/corpus.hpp"
#include "depmine/oracle/report.hpp"
#include "depmine/rng.hpp"

namespace depmine::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Loading { Gaussian, Orthonormal, Zero };

/// Where the sparse edge pattern is planted: in Sigma_XX itself, or in its
/// inverse (the graphical-model parametrization, where missing edges are
/// exactly the zero partial correlations).
enum class Plant { Covariance, Precision };

struct GaussianSpec {
  int L = 5;
  int k = 2;
  int n_edges = 3;
  double edge_scale = 0.3;
  /// Overall multiplier on Sigma_XX.
  double noise_var = 1.0;
  /// Sigma_ZZ = latent_var * I.
  double latent_var = 1.0;
  Loading loading = Loading::Gaussian;
  Plant plant = Plant::Covariance;
  std::uint64_t seed = 0;
};

struct GaussianModel {
  MatrixXd A;        // L x k
  MatrixXd sigma_zz; // k x k
  MatrixXd sigma_xx; // L x L
  std::set<corpus::Edge> graph;

  int L() const { return static_cast<int>(A.rows()); }
  int k() const { return static_cast<int>(A.cols()); }
  MatrixXd cov() const { return A * sigma_zz * A.transpose() + sigma_xx; }
};

/// Random latent-variable Gaussian model. Edge weights are +-U(0.5, 1)
/// times edge_scale; the planted matrix is repaired to be positive definite
/// by inflating its diagonal when needed.
GaussianModel gaussian_gen(const GaussianSpec& spec);
GaussianModel gaussian_gen(int L, int k, int n_edges, double scale, std::uint64_t seed);

/// Population regression coefficients of x_i on the other coordinates.
VectorXd masked_beta(const GaussianModel& model, int i);
/// Coefficients of the idealized two-stage regression through Z.
VectorXd two_stage_beta(const GaussianModel& model, int i);

/// ||beta_mask - beta_2sls|| against ||Sigma_XX[\i, i]|| * ||Cov(X)^-1||_op.
PropReport prop1_check(const GaussianModel& model, int i);

struct GaussianSample {
  MatrixXd z;  // n x k
  MatrixXd x;  // n x L
};
GaussianSample sample(const GaussianModel& model, int n, Rng& rng);

struct PcaResult {
  MatrixXd V;            // L x k, top-k eigenvectors of Cov(X)
  VectorXd eigenvalues;  // all eigenvalues of Cov(X), descending
  MatrixXd projected;    // n x L rows V V^T x
  double lambda_k = 0.0;           // k-th eigenvalue of A Sigma_ZZ A^T
  double lambda_noise_k1 = 0.0;    // (k+1)-th eigenvalue of Sigma_XX
  bool vacuous() const { return !(lambda_k > lambda_noise_k1); }
};
PcaResult pca_project(const GaussianModel& model, const MatrixXd& samples, int k);

/// Monte-Carlo mean of ||AZ - X_PCA|| against the mean of the per-sample
/// bound. Reports vacuous when the eigengap is not positive.
PropReport prop2_check(const GaussianModel& model, int n_samples, std::uint64_t seed);

/// Exact Gaussian conditional MI of coordinates i, j given the rest.
double gaussian_cond_mi(const MatrixXd& cov, int i, int j);

struct LassoOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
};

class LassoDiverged : public std::runtime_error {
 public:
  explicit LassoDiverged(int sweeps)
      : std::runtime_error("lasso coordinate descent did not converge in " + std::to_string(sweeps) + " sweeps"),
        sweeps_(sweeps) {}
  int sweeps() const { return sweeps_; }

 private:
  int sweeps_;
};

/// argmin (1/2n)||y - X b||^2 + lambda ||b||_1 on centered data by cyclic
/// coordinate descent with soft-thresholding.
VectorXd lasso(const MatrixXd& X, const VectorXd& y, double lambda, const LassoOptions& opts = {});

/// OR-rule neighborhood selection from an n x L sample matrix.
std::set<corpus::Edge> neighborhood_select(const MatrixXd& samples, double lambda, const LassoOptions& opts = {});

}  // namespace depmine::oracle
