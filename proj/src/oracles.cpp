#include "ganem/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ganem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// x*log(y) with the 0*log 0 := 0 convention (x == 0 kills the term).
double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

}  // namespace

DiscreteDistribution make_distribution(std::vector<double> p) {
  if (p.empty()) fail("make_distribution: empty support");
  double sum = 0;
  for (double v : p) {
    if (v < 0) fail("make_distribution: negative probability");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "make_distribution: probabilities sum to " << sum << ", not 1";
    fail(msg.str());
  }
  return {std::move(p)};
}

DiscreteDistribution normalized(std::vector<double> mass) {
  if (mass.empty()) fail("normalized: empty support");
  double sum = 0;
  for (double v : mass) {
    if (v < 0) fail("normalized: negative mass");
    sum += v;
  }
  if (sum <= 0) fail("normalized: zero total mass");
  for (double& v : mass) v /= sum;
  // Exact unit sum despite rounding: fold the residual into the largest entry.
  double s2 = 0;
  for (double v : mass) s2 += v;
  auto it = std::max_element(mass.begin(), mass.end());
  *it += 1.0 - s2;
  return {std::move(mass)};
}

void validate_instance(const DiscreteGameInstance& inst) {
  const int s = inst.support();
  const int k = inst.clusters();
  if (s == 0) fail("game instance: empty support");
  if (k == 0) fail("game instance: no clusters");
  if (static_cast<int>(inst.fakes.size()) != k)
    fail("game instance: weights/fakes cluster count mismatch");
  make_distribution(inst.real.p);
  for (int i = 0; i < k; ++i) {
    if (static_cast<int>(inst.weights[i].size()) != s)
      fail("game instance: weight vector length mismatch");
    for (double w : inst.weights[i])
      if (w < 0 || w > 1) fail("game instance: weight outside [0,1]");
    if (inst.fakes[i].support() != s) fail("game instance: fake support mismatch");
    make_distribution(inst.fakes[i].p);
  }
}

DiscreteGameInstance random_game_instance(int support, int clusters, Rng& rng,
                                          bool constant_weights) {
  if (support <= 0 || clusters <= 0) fail("random_game_instance: sizes must be positive");
  DiscreteGameInstance inst;
  std::vector<double> mass(support);
  for (auto& v : mass) v = rng.uniform(0.05, 1.0);
  inst.real = normalized(std::move(mass));
  for (int i = 0; i < clusters; ++i) {
    std::vector<double> w(support);
    if (constant_weights) {
      const double c = rng.uniform(0.05, 1.0);
      std::fill(w.begin(), w.end(), c);
    } else {
      for (auto& v : w) v = rng.uniform(0.0, 1.0);
    }
    inst.weights.push_back(std::move(w));
    std::vector<double> f(support);
    for (auto& v : f) v = rng.uniform(0.05, 1.0);
    inst.fakes.push_back(normalized(std::move(f)));
  }
  validate_instance(inst);
  return inst;
}

namespace {

void check_cluster(const DiscreteGameInstance& inst, int cluster, const char* who) {
  if (cluster < 0 || cluster >= inst.clusters()) {
    std::ostringstream msg;
    msg << who << ": cluster " << cluster << " out of [0, " << inst.clusters() << ")";
    fail(msg.str());
  }
}

}  // namespace

OptimalD optimal_discriminator(const DiscreteGameInstance& inst, int cluster) {
  check_cluster(inst, cluster, "optimal_discriminator");
  const int s = inst.support();
  OptimalD out;
  out.d.resize(s);
  out.excluded.assign(s, 0);
  for (int x = 0; x < s; ++x) {
    const double a = inst.weights[cluster][x] * inst.real.p[x];
    const double b = inst.fakes[cluster].p[x];
    if (a == 0.0 && b == 0.0) {
      out.d[x] = 0.5;
      out.excluded[x] = 1;
    } else {
      out.d[x] = a / (a + b);
    }
  }
  return out;
}

double game_value(const DiscreteGameInstance& inst, int cluster, std::span<const double> d) {
  check_cluster(inst, cluster, "game_value");
  const int s = inst.support();
  if (static_cast<int>(d.size()) != s) fail("game_value: discriminator length mismatch");
  double value = 0;
  for (int x = 0; x < s; ++x) {
    value += xlogy(inst.weights[cluster][x] * inst.real.p[x], d[x]);
    value += xlogy(inst.fakes[cluster].p[x], 1.0 - d[x]);
  }
  return value;
}

std::vector<double> brute_force_optimal_d(const DiscreteGameInstance& inst, int cluster,
                                          int refine_iters) {
  check_cluster(inst, cluster, "brute_force_optimal_d");
  const int s = inst.support();
  std::vector<double> best(s, 0.5);
  for (int x = 0; x < s; ++x) {
    const double a = inst.weights[cluster][x] * inst.real.p[x];
    const double b = inst.fakes[cluster].p[x];
    // Pointwise objective f(t) = a log t + b log(1-t), strictly concave on
    // (0,1): ternary search needs no derivative information.
    auto f = [&](double t) { return xlogy(a, t) + xlogy(b, 1.0 - t); };
    double lo = 1e-12, hi = 1.0 - 1e-12;
    for (int it = 0; it < refine_iters; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (f(m1) < f(m2)) lo = m1; else hi = m2;
    }
    best[x] = 0.5 * (lo + hi);
  }
  return best;
}

double kl_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail("kl_divergence: length mismatch");
  double kl = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) fail("kl_divergence: negative mass");
    if (a[i] == 0.0) continue;
    if (b[i] == 0.0) return kInf;
    kl += a[i] * std::log(a[i] / b[i]);
  }
  return kl;
}

double generalized_jsd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail("generalized_jsd: length mismatch");
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) fail("generalized_jsd: negative mass");
    const double m = a[i] + b[i];
    if (m == 0.0) continue;
    total += xlogy(a[i], 2.0 * a[i] / m) + xlogy(b[i], 2.0 * b[i] / m);
  }
  return 0.5 * total;
}

DiscreteDistribution reweighted_real(const DiscreteGameInstance& inst, int cluster) {
  check_cluster(inst, cluster, "reweighted_real");
  std::vector<double> mass(inst.support());
  for (int x = 0; x < inst.support(); ++x) mass[x] = inst.weights[cluster][x] * inst.real.p[x];
  return normalized(std::move(mass));
}

IdentityCheck game_value_identity(const DiscreteGameInstance& inst, int cluster) {
  check_cluster(inst, cluster, "game_value_identity");
  const auto& w = inst.weights[cluster];
  for (double v : w)
    if (v != w[0]) fail("game_value_identity: cluster weights must be constant across the support");
  const double w_const = w[0];

  const OptimalD opt = optimal_discriminator(inst, cluster);
  IdentityCheck out;
  out.direct = game_value(inst, cluster, opt.d);

  std::vector<double> weighted_real(inst.support());
  for (int x = 0; x < inst.support(); ++x) weighted_real[x] = w_const * inst.real.p[x];
  out.via_divergence = -(w_const + 1.0) * std::numbers::ln2 +
                       2.0 * generalized_jsd(weighted_real, inst.fakes[cluster].p);
  out.residual = out.direct - out.via_divergence;
  return out;
}

// ---------------------------------------------------------------------------

QResult exact_q(const Tensor& w, std::span<const double> phi, const Tensor& lik) {
  if (w.empty() || w.shape().size() != 2) fail("exact_q: w must be [N x K]");
  const int n = w.rows(), k = w.cols();
  if (static_cast<int>(phi.size()) != k) fail("exact_q: phi length must equal K");
  if (lik.shape() != w.shape()) fail("exact_q: likelihood table must be [N x K]");

  QResult out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double weight = w(i, j);
      if (weight < 0) fail("exact_q: negative assignment weight");
      if (weight == 0.0) continue;
      const double l = lik(i, j);
      const double p = phi[j];
      if (l <= 0.0 || p <= 0.0) {
        out.negative_infinity = true;
        out.q1 = l <= 0.0 ? -kInf : out.q1;
        out.q2 = p <= 0.0 ? -kInf : out.q2;
        out.q = -kInf;
        return out;
      }
      out.q1 += weight * std::log(l);
      out.q2 += weight * std::log(p);
    }
  }
  out.q = out.q1 + out.q2;
  return out;
}

// ---------------------------------------------------------------------------

DiscreteEmTrace discrete_em_fit(const std::vector<int>& points, int support, int k, int iters,
                                std::uint64_t seed) {
  if (points.empty()) fail("discrete_em_fit: no data points");
  if (support <= 0 || k <= 0) fail("discrete_em_fit: support and K must be positive");
  for (int p : points)
    if (p < 0 || p >= support) fail("discrete_em_fit: point outside support");
  const int n = static_cast<int>(points.size());

  // Seeded random soft assignment; a uniform start is a symmetric fixed
  // point of this harness.
  Rng rng = Rng(seed).substream("discrete-em");
  Tensor w = Tensor::zeros({n, k});
  {
    auto values = w.values_mut();
    for (int i = 0; i < n; ++i) {
      double sum = 0;
      for (int j = 0; j < k; ++j) {
        const double v = 0.1 + rng.uniform();
        values[static_cast<std::size_t>(i) * k + j] = v;
        sum += v;
      }
      for (int j = 0; j < k; ++j) values[static_cast<std::size_t>(i) * k + j] /= sum;
    }
  }

  std::vector<double> phi(k, 1.0 / k);
  std::vector<std::vector<double>> tables(k, std::vector<double>(support, 1.0 / support));

  auto likelihood_table = [&](const std::vector<std::vector<double>>& t) {
    Tensor lik = Tensor::zeros({n, k});
    auto values = lik.values_mut();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) values[static_cast<std::size_t>(i) * k + j] = t[j][points[i]];
    return lik;
  };

  auto m_step = [&](const Tensor& assign) {
    std::vector<double> new_phi(k, 0.0);
    std::vector<std::vector<double>> new_tables(k, std::vector<double>(support, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        new_phi[j] += assign(i, j);
        new_tables[j][points[i]] += assign(i, j);
      }
    for (int j = 0; j < k; ++j) {
      const double nj = new_phi[j];
      if (nj > 0) {
        for (double& v : new_tables[j]) v /= nj;
      } else {
        std::fill(new_tables[j].begin(), new_tables[j].end(), 1.0 / support);
      }
      new_phi[j] /= n;
    }
    return std::make_pair(std::move(new_phi), std::move(new_tables));
  };

  DiscreteEmTrace trace;

  // Initial M-step fits theta to the random assignment.
  std::tie(phi, tables) = m_step(w);

  for (int it = 0; it < iters; ++it) {
    // E-step: exact Bayes posterior under the current theta.
    double loglik = 0;
    auto values = w.values_mut();
    for (int i = 0; i < n; ++i) {
      double denom = 0;
      for (int j = 0; j < k; ++j) denom += phi[j] * tables[j][points[i]];
      loglik += std::log(denom);
      for (int j = 0; j < k; ++j)
        values[static_cast<std::size_t>(i) * k + j] = phi[j] * tables[j][points[i]] / denom;
    }
    trace.loglik.push_back(loglik);

    // M-step; Q must not decrease for the same w.
    const QResult before = exact_q(w, phi, likelihood_table(tables));
    std::tie(phi, tables) = m_step(w);
    const QResult after = exact_q(w, phi, likelihood_table(tables));
    trace.q_before.push_back(before.q);
    trace.q_after.push_back(after.q);
  }

  trace.w = std::move(w);
  trace.phi = std::move(phi);
  trace.tables = std::move(tables);
  return trace;
}

// ---------------------------------------------------------------------------
// K-means

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::span<const double> row(const Tensor& x, int i) {
  return x.values().subspan(static_cast<std::size_t>(i) * x.cols(), x.cols());
}

// k-means++ seeding: first centroid uniform, then proportional to squared
// distance from the nearest chosen centroid.
std::vector<int> kmeanspp_seed(const Tensor& x, int k, Rng& rng) {
  const int n = x.rows();
  std::vector<int> chosen;
  chosen.push_back(rng.uniform_int(n));
  std::vector<double> d2(n, kInf);
  while (static_cast<int>(chosen.size()) < k) {
    const int last = chosen.back();
    double total = 0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(row(x, i), row(x, last)));
      total += d2[i];
    }
    int pick;
    if (total <= 0) {
      pick = rng.uniform_int(n);  // all remaining points coincide with a centroid
    } else {
      const double target = rng.uniform() * total;
      double cum = 0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        cum += d2[i];
        if (target < cum) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
  }
  return chosen;
}

}  // namespace

KmeansResult kmeans_fit(const Tensor& x, int k, const KmeansConfig& config) {
  if (x.empty() || x.shape().size() != 2) fail("kmeans_fit: data must be [N x d]");
  const int n = x.rows(), d = x.cols();
  if (k <= 0 || n < k) fail("kmeans_fit: need N >= K >= 1");

  Rng rng = Rng(config.seed).substream("kmeans");
  KmeansResult out;
  std::vector<double> centroids(static_cast<std::size_t>(k) * d);
  {
    auto seeds = kmeanspp_seed(x, k, rng);
    for (int j = 0; j < k; ++j) {
      auto src = row(x, seeds[j]);
      std::copy(src.begin(), src.end(), centroids.begin() + static_cast<std::ptrdiff_t>(j) * d);
    }
  }

  out.assign.assign(n, 0);
  std::vector<double> dist_to_centroid(n, 0.0);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    // Assignment step (ties to the lowest centroid index).
    bool changed = iter == 0;
    double inertia = 0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = kInf;
      for (int j = 0; j < k; ++j) {
        const double dj = sq_dist(row(x, i), {&centroids[static_cast<std::size_t>(j) * d],
                                              static_cast<std::size_t>(d)});
        if (dj < best_d) {
          best_d = dj;
          best = j;
        }
      }
      if (out.assign[i] != best) changed = true;
      out.assign[i] = best;
      dist_to_centroid[i] = best_d;
      inertia += best_d;
    }
    out.inertia_trace.push_back(inertia);
    out.inertia = inertia;
    out.iters = iter + 1;
    if (!changed && iter > 0) break;

    // Update step.
    std::vector<double> sums(static_cast<std::size_t>(k) * d, 0.0);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[out.assign[i]];
      auto xi = row(x, i);
      for (int c = 0; c < d; ++c) sums[static_cast<std::size_t>(out.assign[i]) * d + c] += xi[c];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        // Re-seed an empty cluster from the farthest point.
        out.reseeded = true;
        int far = 0;
        for (int i = 1; i < n; ++i)
          if (dist_to_centroid[i] > dist_to_centroid[far]) far = i;
        auto src = row(x, far);
        std::copy(src.begin(), src.end(), centroids.begin() + static_cast<std::ptrdiff_t>(j) * d);
        dist_to_centroid[far] = 0;  // avoid picking the same point for two empty clusters
      } else {
        for (int c = 0; c < d; ++c)
          centroids[static_cast<std::size_t>(j) * d + c] = sums[static_cast<std::size_t>(j) * d + c] / counts[j];
      }
    }
  }
  out.centroids = Tensor({k, d}, std::move(centroids));
  return out;
}

// ---------------------------------------------------------------------------
// GMM-EM

namespace {

// Cholesky factorization of a symmetric positive-definite matrix (row major);
// returns false when the matrix is not positive definite.
bool cholesky(std::vector<double>& a, int d) {
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<std::size_t>(i) * d + j];
      for (int p = 0; p < j; ++p)
        sum -= a[static_cast<std::size_t>(i) * d + p] * a[static_cast<std::size_t>(j) * d + p];
      if (i == j) {
        if (sum <= 0) return false;
        a[static_cast<std::size_t>(i) * d + j] = std::sqrt(sum);
      } else {
        a[static_cast<std::size_t>(i) * d + j] = sum / a[static_cast<std::size_t>(j) * d + j];
      }
    }
    for (int j = i + 1; j < d; ++j) a[static_cast<std::size_t>(i) * d + j] = 0;
  }
  return true;
}

}  // namespace

GmmResult gmm_em_fit(const Tensor& x, int k, const GmmConfig& config) {
  if (x.empty() || x.shape().size() != 2) fail("gmm_em_fit: data must be [N x d]");
  const int n = x.rows(), d = x.cols();
  if (k <= 0 || n <= k) fail("gmm_em_fit: need N > K >= 1");

  Rng rng = Rng(config.seed).substream("gmm");
  GmmResult out;
  out.model.full_cov = config.full_cov;
  out.model.weights.assign(k, 1.0 / k);

  // Means from k-means++ picks; variances from the global spread.
  std::vector<double> means(static_cast<std::size_t>(k) * d);
  {
    auto seeds = kmeanspp_seed(x, k, rng);
    for (int j = 0; j < k; ++j) {
      auto src = row(x, seeds[j]);
      std::copy(src.begin(), src.end(), means.begin() + static_cast<std::ptrdiff_t>(j) * d);
    }
  }
  std::vector<double> global_var(d, 0.0);
  {
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i) {
      auto xi = row(x, i);
      for (int c = 0; c < d; ++c) mean[c] += xi[c];
    }
    for (int c = 0; c < d; ++c) mean[c] /= n;
    for (int i = 0; i < n; ++i) {
      auto xi = row(x, i);
      for (int c = 0; c < d; ++c) global_var[c] += (xi[c] - mean[c]) * (xi[c] - mean[c]);
    }
    for (int c = 0; c < d; ++c) global_var[c] = std::max(global_var[c] / n, config.var_floor);
  }

  const std::size_t cov_span = config.full_cov ? static_cast<std::size_t>(d) * d
                                               : static_cast<std::size_t>(d);
  std::vector<double> covs(static_cast<std::size_t>(k) * cov_span, 0.0);
  for (int j = 0; j < k; ++j) {
    if (config.full_cov) {
      for (int c = 0; c < d; ++c) covs[j * cov_span + static_cast<std::size_t>(c) * d + c] = global_var[c];
    } else {
      for (int c = 0; c < d; ++c) covs[j * cov_span + c] = global_var[c];
    }
  }

  std::vector<double> resp(static_cast<std::size_t>(n) * k, 0.0);
  // Per-component Cholesky factors and log-determinants (full covariance).
  std::vector<std::vector<double>> chol(k);
  std::vector<double> logdet(k, 0.0);

  auto refresh_factors = [&]() {
    if (!config.full_cov) return;
    for (int j = 0; j < k; ++j) {
      std::vector<double> a(covs.begin() + static_cast<std::ptrdiff_t>(j * cov_span),
                            covs.begin() + static_cast<std::ptrdiff_t>((j + 1) * cov_span));
      double ridge = 0;
      while (true) {
        std::vector<double> trial = a;
        if (ridge > 0)
          for (int c = 0; c < d; ++c) trial[static_cast<std::size_t>(c) * d + c] += ridge;
        if (cholesky(trial, d)) {
          chol[j] = std::move(trial);
          break;
        }
        out.floored = true;
        ridge = ridge == 0 ? config.var_floor : ridge * 10;
        if (ridge > 1e6) fail("gmm_em_fit: covariance irreparably singular");
      }
      logdet[j] = 0;
      for (int c = 0; c < d; ++c) logdet[j] += 2 * std::log(chol[j][static_cast<std::size_t>(c) * d + c]);
    }
  };
  refresh_factors();

  const double log2pi = std::log(2 * std::numbers::pi);
  std::vector<double> work(d);

  auto log_pdf = [&](int j, std::span<const double> xi) {
    if (config.full_cov) {
      // Solve L y = (x - mu); quadratic form = |y|^2.
      const auto& l = chol[j];
      for (int c = 0; c < d; ++c) {
        double sum = xi[c] - means[static_cast<std::size_t>(j) * d + c];
        for (int p = 0; p < c; ++p) sum -= l[static_cast<std::size_t>(c) * d + p] * work[p];
        work[c] = sum / l[static_cast<std::size_t>(c) * d + c];
      }
      double quad = 0;
      for (int c = 0; c < d; ++c) quad += work[c] * work[c];
      return -0.5 * (d * log2pi + logdet[j] + quad);
    }
    double acc = 0;
    for (int c = 0; c < d; ++c) {
      const double var = covs[j * cov_span + c];
      const double diff = xi[c] - means[static_cast<std::size_t>(j) * d + c];
      acc += std::log(var) + diff * diff / var;
    }
    return -0.5 * (d * log2pi + acc);
  };

  for (int iter = 0; iter < config.max_iters; ++iter) {
    // E-step with the log-sum-exp trick.
    double loglik = 0;
    for (int i = 0; i < n; ++i) {
      auto xi = row(x, i);
      double mx = -kInf;
      for (int j = 0; j < k; ++j) {
        resp[static_cast<std::size_t>(i) * k + j] = std::log(out.model.weights[j]) + log_pdf(j, xi);
        mx = std::max(mx, resp[static_cast<std::size_t>(i) * k + j]);
      }
      double z = 0;
      for (int j = 0; j < k; ++j) z += std::exp(resp[static_cast<std::size_t>(i) * k + j] - mx);
      const double lse = mx + std::log(z);
      loglik += lse;
      for (int j = 0; j < k; ++j)
        resp[static_cast<std::size_t>(i) * k + j] = std::exp(resp[static_cast<std::size_t>(i) * k + j] - lse);
    }
    out.loglik_trace.push_back(loglik);
    out.iters = iter + 1;

    const bool converged = out.loglik_trace.size() >= 2 &&
                           loglik - out.loglik_trace[out.loglik_trace.size() - 2] < config.tol;

    // M-step.
    for (int j = 0; j < k; ++j) {
      double nj = 0;
      for (int i = 0; i < n; ++i) nj += resp[static_cast<std::size_t>(i) * k + j];
      const double safe_nj = std::max(nj, 1e-10);
      out.model.weights[j] = nj / n;
      for (int c = 0; c < d; ++c) {
        double acc = 0;
        for (int i = 0; i < n; ++i)
          acc += resp[static_cast<std::size_t>(i) * k + j] * x(i, c);
        means[static_cast<std::size_t>(j) * d + c] = acc / safe_nj;
      }
      if (config.full_cov) {
        std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < n; ++i) {
          const double r = resp[static_cast<std::size_t>(i) * k + j];
          if (r == 0) continue;
          auto xi = row(x, i);
          for (int a = 0; a < d; ++a) {
            const double da = xi[a] - means[static_cast<std::size_t>(j) * d + a];
            for (int b = 0; b <= a; ++b) {
              const double db = xi[b] - means[static_cast<std::size_t>(j) * d + b];
              cov[static_cast<std::size_t>(a) * d + b] += r * da * db;
            }
          }
        }
        for (int a = 0; a < d; ++a)
          for (int b = 0; b <= a; ++b) {
            double v = cov[static_cast<std::size_t>(a) * d + b] / safe_nj;
            if (a == b && v < config.var_floor) {
              v = config.var_floor;
              out.floored = true;
            }
            cov[static_cast<std::size_t>(a) * d + b] = v;
            cov[static_cast<std::size_t>(b) * d + a] = v;
          }
        std::copy(cov.begin(), cov.end(), covs.begin() + static_cast<std::ptrdiff_t>(j * cov_span));
      } else {
        for (int c = 0; c < d; ++c) {
          double acc = 0;
          for (int i = 0; i < n; ++i) {
            const double diff = x(i, c) - means[static_cast<std::size_t>(j) * d + c];
            acc += resp[static_cast<std::size_t>(i) * k + j] * diff * diff;
          }
          double v = acc / safe_nj;
          if (v < config.var_floor) {
            v = config.var_floor;
            out.floored = true;
          }
          covs[j * cov_span + c] = v;
        }
      }
    }
    refresh_factors();
    if (converged) break;
  }

  out.model.means = Tensor({k, d}, std::move(means));
  out.model.covs = Tensor({k, static_cast<int>(cov_span)}, std::move(covs));
  out.resp = Tensor({n, k}, std::move(resp));
  return out;
}

}  // namespace ganem
