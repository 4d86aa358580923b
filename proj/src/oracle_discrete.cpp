#include "depmine/oracle/discrete.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace depmine::oracle {

namespace {

std::size_t ipow(int base, int exp) {
  std::size_t out = 1;
  for (int k = 0; k < exp; ++k) out *= static_cast<std::size_t>(base);
  return out;
}

// Digit of position `pos` in an x-index.
int digit(std::size_t x, int pos, int L, int V) {
  for (int k = L - 1; k > pos; --k) x /= static_cast<std::size_t>(V);
  return static_cast<int>(x % static_cast<std::size_t>(V));
}

std::vector<double> dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::vector<double> w(n);
  double total = 0.0;
  for (double& v : w) total += (v = rng.gamma(alpha));
  for (double& v : w) v /= total;
  return w;
}

// Index of the context (positions other than i, j) as a mixed-radix number.
std::size_t context_index(std::size_t x, int i, int j, int L, int V) {
  std::size_t c = 0;
  for (int k = 0; k < L; ++k) {
    if (k == i || k == j) continue;
    c = c * static_cast<std::size_t>(V) + static_cast<std::size_t>(digit(x, k, L, V));
  }
  return c;
}

double plogp_sum(const std::vector<double>& probs) {
  double h = 0.0;
  for (double v : probs) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

void check_pair(int L, int i, int j) {
  if (i < 0 || j < 0 || i >= L || j >= L || i == j) throw std::invalid_argument("invalid position pair");
}

// p(a, b, c) for a = x_i, b = x_j, c = context, flattened [c][a][b].
std::vector<double> pair_context_table(const JointX& p, int i, int j) {
  check_pair(p.L, i, j);
  const std::size_t n_ctx = ipow(p.V, p.L - 2);
  const auto v = static_cast<std::size_t>(p.V);
  std::vector<double> out(n_ctx * v * v, 0.0);
  for (std::size_t x = 0; x < p.p.size(); ++x) {
    const std::size_t c = context_index(x, i, j, p.L, p.V);
    const auto a = static_cast<std::size_t>(digit(x, i, p.L, p.V));
    const auto b = static_cast<std::size_t>(digit(x, j, p.L, p.V));
    out[(c * v + a) * v + b] += p.p[x];
  }
  return out;
}

void check_joint(const JointX& p) {
  if (p.L < 2 || p.V < 1 || p.p.size() != ipow(p.V, p.L)) throw std::invalid_argument("malformed joint table");
}

}  // namespace

std::size_t DiscreteLatentModel::n_x() const { return ipow(V, L); }

void DiscreteLatentModel::validate() const {
  if (n_z < 1 || n_z > 4 || L < 2 || L > 4 || V < 1 || V > 5) throw std::invalid_argument("discrete model exceeds size caps");
  if (table.size() != static_cast<std::size_t>(n_z) * n_x()) throw std::invalid_argument("discrete table has the wrong size");
  double total = 0.0;
  for (double v : table) {
    if (!(v >= 0.0)) throw std::invalid_argument("discrete table has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("discrete table is not normalized");
}

DiscreteLatentModel discrete_gen(const DiscreteSpec& spec, std::uint64_t seed) {
  DiscreteLatentModel m;
  m.n_z = spec.n_z;
  m.L = spec.L;
  m.V = spec.V;
  if (m.n_z < 1 || m.n_z > 4 || m.L < 2 || m.L > 4 || m.V < 1 || m.V > 5) {
    throw std::invalid_argument("discrete_gen: sizes exceed caps |Z|<=4, L<=4, |V|<=5");
  }
  if (!(spec.concentration > 0.0)) throw std::invalid_argument("discrete_gen: concentration must be positive");
  Rng rng = Rng(seed).split(51);
  const std::size_t nx = m.n_x();
  switch (spec.kind) {
    case LatentKind::Random:
      m.table = dirichlet(static_cast<std::size_t>(m.n_z) * nx, spec.concentration, rng);
      break;
    case LatentKind::IndependentZ: {
      const auto pz = dirichlet(static_cast<std::size_t>(m.n_z), spec.concentration, rng);
      const auto px = dirichlet(nx, spec.concentration, rng);
      m.table.resize(static_cast<std::size_t>(m.n_z) * nx);
      for (int z = 0; z < m.n_z; ++z) {
        for (std::size_t x = 0; x < nx; ++x) m.table[static_cast<std::size_t>(z) * nx + x] = pz[z] * px[x];
      }
      break;
    }
    case LatentKind::DeterministicZ: {
      check_pair(m.L, spec.det_i, spec.det_j);
      const std::size_t n_ctx = ipow(m.V, m.L - 2);
      std::vector<int> f(n_ctx);
      for (auto& z : f) z = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.n_z)));
      const auto px = dirichlet(nx, spec.concentration, rng);
      m.table.assign(static_cast<std::size_t>(m.n_z) * nx, 0.0);
      for (std::size_t x = 0; x < nx; ++x) {
        const int z = f[context_index(x, spec.det_i, spec.det_j, m.L, m.V)];
        m.table[static_cast<std::size_t>(z) * nx + x] = px[x];
      }
      break;
    }
  }
  // Renormalize so the total mass is 1 to machine precision.
  double total = 0.0;
  for (double v : m.table) total += v;
  for (double& v : m.table) v /= total;
  return m;
}

ExactQuantities discrete_exact(const DiscreteLatentModel& model, int i, int j) {
  model.validate();
  check_pair(model.L, i, j);
  const std::size_t nx = model.n_x();
  const std::size_t n_ctx = ipow(model.V, model.L - 2);
  const auto V = static_cast<std::size_t>(model.V);
  const auto Z = static_cast<std::size_t>(model.n_z);

  // Marginal tables over subsets of {z, a, b, c}, keyed by mixed-radix index.
  std::vector<double> zabc(Z * V * V * n_ctx, 0.0);
  for (std::size_t z = 0; z < Z; ++z) {
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t c = context_index(x, i, j, model.L, model.V);
      const auto a = static_cast<std::size_t>(digit(x, i, model.L, model.V));
      const auto b = static_cast<std::size_t>(digit(x, j, model.L, model.V));
      zabc[((z * V + a) * V + b) * n_ctx + c] += model.table[z * nx + x];
    }
  }
  auto marginal = [&](bool keep_z, bool keep_a, bool keep_b) {
    const std::size_t nz = keep_z ? Z : 1, na = keep_a ? V : 1, nb = keep_b ? V : 1;
    std::vector<double> out(nz * na * nb * n_ctx, 0.0);
    for (std::size_t z = 0; z < Z; ++z) {
      for (std::size_t a = 0; a < V; ++a) {
        for (std::size_t b = 0; b < V; ++b) {
          for (std::size_t c = 0; c < n_ctx; ++c) {
            const std::size_t key = (((keep_z ? z : 0) * na + (keep_a ? a : 0)) * nb + (keep_b ? b : 0)) * n_ctx + c;
            out[key] += zabc[((z * V + a) * V + b) * n_ctx + c];
          }
        }
      }
    }
    return plogp_sum(out);
  };
  const double h_c = marginal(false, false, false);
  const double h_ac = marginal(false, true, false);
  const double h_bc = marginal(false, false, true);
  const double h_abc = marginal(false, true, true);
  const double h_zc = marginal(true, false, false);
  const double h_zac = marginal(true, true, false);
  const double h_zbc = marginal(true, false, true);
  const double h_zabc = marginal(true, true, true);

  ExactQuantities q;
  q.cmi = h_ac + h_bc - h_abc - h_c;
  q.cmi_given_z = h_zac + h_zbc - h_zabc - h_zc;
  q.h_z_given_ctx = h_zc - h_c;
  q.mi_xi_z = h_ac + h_zc - h_zac - h_c;
  q.mi_xi_z_given_xj = h_abc + h_zbc - h_zabc - h_bc;
  return q;
}

PropReport prop3_check(const DiscreteLatentModel& model, int i, int j) {
  const ExactQuantities q = discrete_exact(model, i, j);
  PropReport r;
  r.lhs = q.cmi - q.cmi_given_z;
  r.rhs = 2.0 * q.h_z_given_ctx;
  std::ostringstream d;
  d << "i=" << i << " j=" << j;
  r.detail = d.str();
  return r;
}

PropReport prop3_check(const DiscreteLatentModel& model) {
  PropReport worst;
  bool first = true;
  for (int i = 0; i < model.L; ++i) {
    for (int j = i + 1; j < model.L; ++j) {
      PropReport r = prop3_check(model, i, j);
      if (first || r.slack() < worst.slack()) worst = std::move(r);
      first = false;
    }
  }
  return worst;
}

JointX marginal_x(const DiscreteLatentModel& model) {
  model.validate();
  JointX out{model.L, model.V, std::vector<double>(model.n_x(), 0.0)};
  for (int z = 0; z < model.n_z; ++z) {
    for (std::size_t x = 0; x < model.n_x(); ++x) out.p[x] += model.table[static_cast<std::size_t>(z) * model.n_x() + x];
  }
  return out;
}

JointX perturb(const JointX& p, double sigma, Rng& rng) {
  check_joint(p);
  JointX q = p;
  double total = 0.0;
  for (double& v : q.p) total += (v *= std::exp(sigma * rng.normal()));
  for (double& v : q.p) v /= total;
  return q;
}

JointX mix_uniform(const JointX& p, double alpha) {
  check_joint(p);
  JointX q = p;
  const double u = 1.0 / static_cast<double>(p.p.size());
  for (double& v : q.p) v = (1.0 - alpha) * v + alpha * u;
  return q;
}

namespace {

struct ContextTerms {
  double weight = 0.0;  // p(c)
  double exact = 0.0;   // I_p(c)
  double plugin = 0.0;  // I_hat_q(c)
  double kl = 0.0;      // E_{x_j} KL(p(x_i | x_j, c) || q(x_i | x_j, c))
};

std::vector<ContextTerms> context_terms(const JointX& p, const JointX& q, int i, int j) {
  check_joint(p);
  check_joint(q);
  if (p.L != q.L || p.V != q.V) throw std::invalid_argument("joint tables differ in shape");
  const auto tp = pair_context_table(p, i, j);
  const auto tq = pair_context_table(q, i, j);
  const auto V = static_cast<std::size_t>(p.V);
  const std::size_t n_ctx = tp.size() / (V * V);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<ContextTerms> out(n_ctx);
  for (std::size_t c = 0; c < n_ctx; ++c) {
    auto P = [&](std::size_t a, std::size_t b) { return tp[(c * V + a) * V + b]; };
    auto Q = [&](std::size_t a, std::size_t b) { return tq[(c * V + a) * V + b]; };
    ContextTerms& t = out[c];
    std::vector<double> pb(V, 0.0), qb(V, 0.0), pa(V, 0.0);
    for (std::size_t a = 0; a < V; ++a) {
      for (std::size_t b = 0; b < V; ++b) {
        pb[b] += P(a, b);
        qb[b] += Q(a, b);
        pa[a] += P(a, b);
        t.weight += P(a, b);
      }
    }
    if (!(t.weight > 0.0)) continue;
    // Conditionals given the context: p(a | b, c), q(a | b, c), p(b | c).
    auto p_cond = [&](std::size_t a, std::size_t b) { return P(a, b) / pb[b]; };
    auto q_cond = [&](std::size_t a, std::size_t b) { return qb[b] > 0.0 ? Q(a, b) / qb[b] : 0.0; };
    for (std::size_t a = 0; a < V; ++a) {
      double q_mix = 0.0;
      for (std::size_t b = 0; b < V; ++b) q_mix += pb[b] / t.weight * q_cond(a, b);
      for (std::size_t b = 0; b < V; ++b) {
        const double pab = P(a, b) / t.weight;
        if (pab <= 0.0) continue;
        t.exact += pab * std::log(p_cond(a, b) / (pa[a] / t.weight));
        const double qc = q_cond(a, b);
        if (qc <= 0.0 || q_mix <= 0.0) {
          t.plugin = -kInf;
          t.kl = kInf;
          continue;
        }
        t.plugin += pab * (std::log(qc) - std::log(q_mix));
        t.kl += pab * std::log(p_cond(a, b) / qc);
      }
    }
  }
  return out;
}

}  // namespace

double exact_cond_mi(const JointX& p, int i, int j) {
  double total = 0.0;
  for (const auto& t : context_terms(p, p, i, j)) total += t.weight * t.exact;
  return total;
}

double plugin_cond_mi(const JointX& p, const JointX& q, int i, int j) {
  double total = 0.0;
  for (const auto& t : context_terms(p, q, i, j)) {
    if (t.weight > 0.0) total += t.weight * t.plugin;
  }
  return total;
}

PropReport prop4_check(const JointX& p, const JointX& q, int i, int j) {
  PropReport r;
  for (const auto& t : context_terms(p, q, i, j)) {
    if (!(t.weight > 0.0)) continue;
    if (std::isinf(t.kl)) {
      r.lhs = 0.0;
      r.rhs = std::numeric_limits<double>::infinity();
      r.detail = "q vanishes where p is positive: KL infinite";
      return r;
    }
    r.lhs += t.weight * std::abs(t.plugin - t.exact);
    r.rhs += t.weight * t.kl;
  }
  std::ostringstream d;
  d << "i=" << i << " j=" << j;
  r.detail = d.str();
  return r;
}

}  // namespace depmine::oracle
