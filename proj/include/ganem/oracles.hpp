#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ganem/rng.hpp"
#include "ganem/tensor.hpp"

namespace ganem {

// ---------------------------------------------------------------------------
// Discrete adversarial-game oracles. Everything here is closed-form or
// brute-force on a finite support: no networks, no sampling noise.

struct DiscreteDistribution {
  std::vector<double> p;

  int support() const { return static_cast<int>(p.size()); }
};

// Validates nonnegativity and unit mass (within 1e-12).
DiscreteDistribution make_distribution(std::vector<double> p);
// Scales nonnegative mass to sum 1.
DiscreteDistribution normalized(std::vector<double> mass);

// One cluster-conditional discrimination game on a finite support: real
// distribution, per-cluster per-point soft weights, and per-cluster fake
// distributions over the same points.
struct DiscreteGameInstance {
  DiscreteDistribution real;
  std::vector<std::vector<double>> weights;  // [K][S], entries in [0,1]
  std::vector<DiscreteDistribution> fakes;   // K entries

  int support() const { return real.support(); }
  int clusters() const { return static_cast<int>(weights.size()); }
};

void validate_instance(const DiscreteGameInstance& inst);

// Random instance on S points with K clusters; with constant_weights, each
// cluster's weight is a single value replicated across the support.
DiscreteGameInstance random_game_instance(int support, int clusters, Rng& rng,
                                          bool constant_weights = false);

struct OptimalD {
  std::vector<double> d;       // per-point optimum; 0.5 placeholder where excluded
  std::vector<char> excluded;  // true where weighted-real and fake mass are both zero
};

// Pointwise maximizer a/(a+b) of the per-cluster objective, with
// a = w_i(x)*P_r(x) (unnormalized weighted real mass) and b = P_fi(x).
OptimalD optimal_discriminator(const DiscreteGameInstance& inst, int cluster);

// Per-cluster objective evaluated directly:
//   sum_x w_i(x) P_r(x) log d(x) + sum_x P_fi(x) log(1 - d(x)),
// with the 0*log 0 := 0 convention.
double game_value(const DiscreteGameInstance& inst, int cluster, std::span<const double> d);

// Numerically maximizes the objective pointwise (ternary search per support
// point; the objective is strictly concave in each d(x)).
std::vector<double> brute_force_optimal_d(const DiscreteGameInstance& inst, int cluster,
                                          int refine_iters = 200);

// KL(a||b) for unnormalized nonnegative vectors, 0*log 0 := 0;
// infinite when a places mass where b has none.
double kl_divergence(std::span<const double> a, std::span<const double> b);

// Jensen-Shannon-style divergence extended to unnormalized measures:
//   0.5*sum_x [ a log(2a/(a+b)) + b log(2b/(a+b)) ].
// Coincides with the standard JSD when both inputs are distributions.
double generalized_jsd(std::span<const double> a, std::span<const double> b);

// Normalized weighted-real distribution for a cluster: w_i·P_r / Z.
DiscreteDistribution reweighted_real(const DiscreteGameInstance& inst, int cluster);

struct IdentityCheck {
  double direct;          // objective at the optimal discriminator
  double via_divergence;  // -(w+1)*log 2 + 2*generalized_jsd
  double residual;        // direct - via_divergence
};

// Requires the cluster's weights to be constant across the support.
IdentityCheck game_value_identity(const DiscreteGameInstance& inst, int cluster);

// ---------------------------------------------------------------------------
// Exact objective decomposition for tabulated finite models.

struct QResult {
  double q = 0.0;
  double q1 = 0.0;  // sum_n sum_i w_ni log P(x_n | c=i)
  double q2 = 0.0;  // sum_n sum_i w_ni log phi_i
  bool negative_infinity = false;  // zero likelihood/prior met nonzero weight
};

// w: [N x K] soft assignment; phi: length K prior; lik: [N x K] with
// lik(n,i) = P(x_n | c=i).
QResult exact_q(const Tensor& w, std::span<const double> phi, const Tensor& lik);

// ---------------------------------------------------------------------------
// Fully discrete EM harness: the "generator" for each cluster is a tabulated
// distribution refit by weighted maximum likelihood each M-step, and the
// E-step is exact Bayes inversion, so the classical monotonicity guarantees
// must hold exactly.

struct DiscreteEmTrace {
  std::vector<double> q_before;  // Q(theta_old; w) per M-step
  std::vector<double> q_after;   // Q(theta_new; w) per M-step, same w
  std::vector<double> loglik;    // marginal log-likelihood per iteration
  Tensor w;                      // final soft assignment
  std::vector<double> phi;
  std::vector<std::vector<double>> tables;  // [K][S] class-conditional MLE
};

DiscreteEmTrace discrete_em_fit(const std::vector<int>& points, int support, int k, int iters,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Classical baselines.

struct KmeansConfig {
  int max_iters = 100;
  std::uint64_t seed = 0;
};

struct KmeansResult {
  Tensor centroids;  // [K x d]
  std::vector<int> assign;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each assignment step
  bool reseeded = false;              // an empty cluster was re-seeded
  int iters = 0;
};

KmeansResult kmeans_fit(const Tensor& x, int k, const KmeansConfig& config = {});

struct GmmConfig {
  int max_iters = 200;
  double tol = 1e-7;  // absolute log-likelihood improvement stop
  bool full_cov = false;
  double var_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GmmModel {
  Tensor means;  // [K x d]
  Tensor covs;   // diagonal: [K x d]; full: [K x d*d] row-major blocks
  std::vector<double> weights;
  bool full_cov = false;
};

struct GmmResult {
  GmmModel model;
  Tensor resp;  // [N x K] responsibilities
  std::vector<double> loglik_trace;
  bool floored = false;  // variance floor engaged at least once
  int iters = 0;
};

GmmResult gmm_em_fit(const Tensor& x, int k, const GmmConfig& config = {});

}  // namespace ganem
