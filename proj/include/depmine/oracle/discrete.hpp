#pragma once

#include <cstdint>
#include <vector>

#include "depmine/oracle/report.hpp"
#include "depmine/rng.hpp"

namespace depmine::oracle {

enum class LatentKind {
  Random,         // full table drawn from a symmetric Dirichlet
  IndependentZ,   // p(z) p(x)
  DeterministicZ  // z a fixed function of the context X without positions det_i, det_j
};

struct DiscreteSpec {
  int n_z = 2;
  int L = 3;
  int V = 3;
  double concentration = 1.0;
  LatentKind kind = LatentKind::Random;
  int det_i = 0;
  int det_j = 1;
};

/// Explicit joint p(z, x_1..x_L). Index = z * V^L + x-index with position 0
/// the most significant digit.
struct DiscreteLatentModel {
  int n_z = 0;
  int L = 0;
  int V = 0;
  std::vector<double> table;

  std::size_t n_x() const;
  void validate() const;
};

DiscreteLatentModel discrete_gen(const DiscreteSpec& spec, std::uint64_t seed);

struct ExactQuantities {
  double cmi = 0.0;            // I(x_i; x_j | ctx)
  double cmi_given_z = 0.0;    // I(x_i; x_j | Z, ctx)
  double h_z_given_ctx = 0.0;  // H(Z | ctx)
  double mi_xi_z = 0.0;        // I(x_i; Z | ctx)
  double mi_xi_z_given_xj = 0.0;  // I(x_i; Z | x_j, ctx)
};

/// All quantities by exhaustive summation, in nats; ctx = X without i, j.
ExactQuantities discrete_exact(const DiscreteLatentModel& model, int i, int j);

/// I(x_i; x_j | ctx) - I(x_i; x_j | Z, ctx) against 2 H(Z | ctx).
PropReport prop3_check(const DiscreteLatentModel& model, int i, int j);
/// Report for the pair with the smallest slack.
PropReport prop3_check(const DiscreteLatentModel& model);

/// Joint table over x only (L positions, V values).
struct JointX {
  int L = 0;
  int V = 0;
  std::vector<double> p;
};

JointX marginal_x(const DiscreteLatentModel& model);
/// q proportional to p * exp(sigma * g) with g standard normal per entry.
JointX perturb(const JointX& p, double sigma, Rng& rng);
/// (1 - alpha) p + alpha * uniform.
JointX mix_uniform(const JointX& p, double alpha);

/// Exact conditional MI of p averaged over contexts.
double exact_cond_mi(const JointX& p, int i, int j);
/// Plug-in estimator built from q's conditionals with every expectation
/// taken under p, averaged over contexts.
double plugin_cond_mi(const JointX& p, const JointX& q, int i, int j);

/// E_ctx |I_hat_q - I_p| against E_ctx E_{x_j} KL(p(x_i | .) || q(x_i | .)).
PropReport prop4_check(const JointX& p, const JointX& q, int i, int j);

}  // namespace depmine::oracle
