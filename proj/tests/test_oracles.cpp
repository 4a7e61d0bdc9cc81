#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ganem/eval.hpp"
#include "ganem/oracles.hpp"

using namespace ganem;

TEST_CASE("distribution construction") {
  CHECK_NOTHROW(make_distribution({0.25, 0.75}));
  CHECK_THROWS_AS(make_distribution({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(make_distribution({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(make_distribution({}), std::invalid_argument);

  auto d = normalized({1, 3});
  CHECK(d.p[0] == doctest::Approx(0.25));
  CHECK(d.p[1] == doctest::Approx(0.75));
  double sum = 0;
  for (double v : d.p) sum += v;
  CHECK(sum == 1.0);
  CHECK_THROWS_AS(normalized({0, 0}), std::invalid_argument);
}

TEST_CASE("optimal discriminator closed form") {
  SUBCASE("symmetric game sits at one half") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({0.3, 0.3, 0.4});
    inst.weights = {{1, 1, 1}};
    inst.fakes = {make_distribution({0.3, 0.3, 0.4})};
    auto opt = optimal_discriminator(inst, 0);
    for (double v : opt.d) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("frozen two-point instance") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({0.8, 0.2});
    inst.weights = {{1, 1}};
    inst.fakes = {make_distribution({0.2, 0.8})};
    auto opt = optimal_discriminator(inst, 0);
    CHECK(opt.d[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(opt.d[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(opt.excluded[0] == 0);
  }
  SUBCASE("dead support points are excluded and flagged") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({0.0, 1.0});
    inst.weights = {{0.5, 0.5}};
    inst.fakes = {make_distribution({0.0, 1.0})};
    auto opt = optimal_discriminator(inst, 0);
    CHECK(opt.excluded[0] == 1);
    CHECK(opt.excluded[1] == 0);
    CHECK(opt.d[0] == 0.5);
  }
  SUBCASE("cluster index validation") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({1.0});
    inst.weights = {{1.0}};
    inst.fakes = {make_distribution({1.0})};
    CHECK_THROWS_AS(optimal_discriminator(inst, 1), std::invalid_argument);
  }
}

TEST_CASE("closed form beats or ties every probed discriminator") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 2 + rng.uniform_int(15);
    auto inst = random_game_instance(s, 2, rng);
    for (int cluster = 0; cluster < 2; ++cluster) {
      auto opt = optimal_discriminator(inst, cluster);
      const double at_opt = game_value(inst, cluster, opt.d);
      for (int probe = 0; probe < 50; ++probe) {
        std::vector<double> d(s);
        for (auto& v : d) v = rng.uniform(1e-6, 1 - 1e-6);
        CHECK(game_value(inst, cluster, d) <= at_opt + 1e-12);
      }
    }
  }
}

TEST_CASE("brute-force maximization recovers the closed form") {
  Rng rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const int s = 2 + rng.uniform_int(15);
    auto inst = random_game_instance(s, 3, rng);
    for (int cluster = 0; cluster < 3; ++cluster) {
      auto opt = optimal_discriminator(inst, cluster);
      auto brute = brute_force_optimal_d(inst, cluster);
      for (int x = 0; x < s; ++x) {
        CAPTURE(trial);
        CAPTURE(cluster);
        CAPTURE(x);
        CHECK(std::fabs(opt.d[x] - brute[x]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("divergence helpers") {
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> q = {0.9, 0.1};
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0));
  CHECK(kl_divergence(p, q) > 0.0);
  std::vector<double> holey = {1.0, 0.0};
  std::vector<double> full = {0.5, 0.5};
  CHECK(std::isinf(kl_divergence(full, holey)));
  CHECK(kl_divergence(holey, full) == doctest::Approx(std::numbers::ln2));

  CHECK(generalized_jsd(p, p) == doctest::Approx(0.0));
  CHECK(generalized_jsd(p, q) == doctest::Approx(generalized_jsd(q, p)).epsilon(1e-15));
  // Disjoint unit-mass measures reach the JSD maximum, log 2.
  std::vector<double> left = {1.0, 0.0};
  std::vector<double> right = {0.0, 1.0};
  CHECK(generalized_jsd(left, right) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("value identity at the optimum") {
  SUBCASE("matched distributions give minus two log two") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({0.6, 0.4});
    inst.weights = {{1.0, 1.0}};
    inst.fakes = {make_distribution({0.6, 0.4})};
    auto check = game_value_identity(inst, 0);
    CHECK(check.direct == doctest::Approx(-2 * std::numbers::ln2).epsilon(1e-12));
    CHECK(std::fabs(check.residual) <= 1e-12);
  }
  SUBCASE("disjoint supports") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({1.0, 0.0});
    inst.weights = {{1.0, 1.0}};
    inst.fakes = {make_distribution({0.0, 1.0})};
    auto check = game_value_identity(inst, 0);
    CHECK(std::fabs(check.residual) <= 1e-12);
    // 2*JSD = 2 log 2 exactly cancels -(1+1) log 2: the optimum reaches 0.
    CHECK(check.direct == doctest::Approx(0.0));
  }
  SUBCASE("random constant-weight instances") {
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
      const int s = 2 + rng.uniform_int(15);
      auto inst = random_game_instance(s, 2, rng, /*constant_weights=*/true);
      for (int cluster = 0; cluster < 2; ++cluster) {
        auto check = game_value_identity(inst, cluster);
        CAPTURE(trial);
        CHECK(std::fabs(check.residual) <= 1e-9);
      }
    }
  }
  SUBCASE("non-constant weights are rejected") {
    DiscreteGameInstance inst;
    inst.real = make_distribution({0.5, 0.5});
    inst.weights = {{1.0, 0.5}};
    inst.fakes = {make_distribution({0.5, 0.5})};
    CHECK_THROWS_AS(game_value_identity(inst, 0), std::invalid_argument);
  }
}

TEST_CASE("exact objective decomposition") {
  SUBCASE("uniform one-sample instance") {
    Tensor w({1, 2}, {0.5, 0.5});
    Tensor lik({1, 2}, {0.5, 0.5});
    std::vector<double> phi = {0.5, 0.5};
    auto q = exact_q(w, phi, lik);
    CHECK(q.q2 == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(q.q1 == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(q.q == doctest::Approx(q.q1 + q.q2));
    CHECK_FALSE(q.negative_infinity);
  }
  SUBCASE("zero likelihood under positive weight flags minus infinity") {
    Tensor w({1, 2}, {0.5, 0.5});
    Tensor lik({1, 2}, {0.5, 0.0});
    std::vector<double> phi = {0.5, 0.5};
    auto q = exact_q(w, phi, lik);
    CHECK(q.negative_infinity);
    CHECK(std::isinf(q.q));
  }
  SUBCASE("zero weight kills the term instead") {
    Tensor w({1, 2}, {1.0, 0.0});
    Tensor lik({1, 2}, {0.5, 0.0});
    std::vector<double> phi = {0.5, 0.5};
    auto q = exact_q(w, phi, lik);
    CHECK_FALSE(q.negative_infinity);
    CHECK(q.q1 == doctest::Approx(std::log(0.5)));
  }
  SUBCASE("shape validation") {
    Tensor w({1, 2}, {0.5, 0.5});
    Tensor lik({2, 1}, {0.5, 0.5});
    std::vector<double> phi = {0.5, 0.5};
    CHECK_THROWS_AS(exact_q(w, phi, lik), std::invalid_argument);
  }
}

TEST_CASE("discrete EM harness never decreases the objective in its M-step") {
  Rng data_rng(74);
  for (int trial = 0; trial < 5; ++trial) {
    // Two latent clusters concentrated on separate halves of the support.
    std::vector<int> points;
    const int support = 6;
    for (int i = 0; i < 120; ++i) {
      const bool high = data_rng.uniform() < 0.5;
      const int base = high ? 3 : 0;
      points.push_back(base + data_rng.uniform_int(3));
    }
    auto trace = discrete_em_fit(points, support, 2, 15, 1000 + trial);
    REQUIRE(trace.q_before.size() == trace.q_after.size());
    for (std::size_t i = 0; i < trace.q_before.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      CHECK(trace.q_after[i] >= trace.q_before[i] - 1e-9);
    }
    for (std::size_t i = 1; i < trace.loglik.size(); ++i)
      CHECK(trace.loglik[i] >= trace.loglik[i - 1] - 1e-9);
    // Final parameters form a valid mixture.
    double phi_sum = 0;
    for (double v : trace.phi) phi_sum += v;
    CHECK(phi_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("kmeans on exact repeated points") {
  // Three distinct points, many copies each.
  std::vector<double> xs;
  std::vector<int> truth;
  const double pts[3][2] = {{0, 0}, {5, 5}, {-3, 4}};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10; ++i) {
      xs.push_back(pts[c][0]);
      xs.push_back(pts[c][1]);
      truth.push_back(c);
    }
  KmeansResult fit = kmeans_fit(Tensor({30, 2}, xs), 3, {.max_iters = 50, .seed = 3});
  CHECK(fit.inertia == doctest::Approx(0.0));
  CHECK(clustering_error(fit.assign, truth, 3).error == 0.0);
  for (std::size_t i = 1; i < fit.inertia_trace.size(); ++i)
    CHECK(fit.inertia_trace[i] <= fit.inertia_trace[i - 1] + 1e-12);
}

TEST_CASE("kmeans inertia is non-increasing on random data") {
  Rng rng(75);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 60, d = 3;
    std::vector<double> xs(static_cast<std::size_t>(n) * d);
    for (auto& v : xs) v = rng.uniform(-1, 1);
    KmeansResult fit =
        kmeans_fit(Tensor({n, d}, xs), 4, {.max_iters = 40, .seed = 100u + static_cast<unsigned>(trial)});
    for (std::size_t i = 1; i < fit.inertia_trace.size(); ++i) {
      CAPTURE(trial);
      CHECK(fit.inertia_trace[i] <= fit.inertia_trace[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("kmeans re-seeds starved clusters") {
  // Only two distinct locations but three clusters: one cluster must end up
  // empty after ties resolve to the lowest index, forcing a re-seed.
  std::vector<double> xs;
  for (int i = 0; i < 8; ++i) {
    xs.push_back(i < 4 ? 0.0 : 10.0);
    xs.push_back(0.0);
  }
  KmeansResult fit = kmeans_fit(Tensor({8, 2}, xs), 3, {.max_iters = 20, .seed = 1});
  CHECK(fit.reseeded);
}

TEST_CASE("kmeans matches exhaustive assignment search on a tiny instance") {
  // 8 points, two tight groups.
  std::vector<double> xs = {0.0, 0.1, 0.2, -0.1, 5.0, 5.2, 4.9, 5.1};
  Tensor x({8, 1}, xs);
  KmeansResult fit = kmeans_fit(x, 2, {.max_iters = 30, .seed = 7});

  double best = 1e18;
  for (int mask = 1; mask < 255; ++mask) {  // skip all-in-one-cluster splits
    double sum0 = 0, sum1 = 0;
    int n0 = 0, n1 = 0;
    for (int i = 0; i < 8; ++i) {
      if (mask & (1 << i)) {
        sum0 += xs[i];
        ++n0;
      } else {
        sum1 += xs[i];
        ++n1;
      }
    }
    const double m0 = sum0 / n0, m1 = sum1 / n1;
    double inertia = 0;
    for (int i = 0; i < 8; ++i) {
      const double c = (mask & (1 << i)) ? m0 : m1;
      inertia += (xs[i] - c) * (xs[i] - c);
    }
    best = std::min(best, inertia);
  }
  CHECK(fit.inertia == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("single-component gmm recovers sample moments") {
  Rng rng(76);
  const int n = 500;
  std::vector<double> xs(static_cast<std::size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    xs[2 * static_cast<std::size_t>(i)] = rng.normal(1.5, 0.7);
    xs[2 * static_cast<std::size_t>(i) + 1] = rng.normal(-0.5, 1.2);
  }
  Tensor x({n, 2}, xs);
  GmmResult fit = gmm_em_fit(x, 1, {.max_iters = 5, .seed = 1});

  double mean0 = 0, mean1 = 0;
  for (int i = 0; i < n; ++i) {
    mean0 += x(i, 0);
    mean1 += x(i, 1);
  }
  mean0 /= n;
  mean1 /= n;
  double var0 = 0, var1 = 0;
  for (int i = 0; i < n; ++i) {
    var0 += (x(i, 0) - mean0) * (x(i, 0) - mean0);
    var1 += (x(i, 1) - mean1) * (x(i, 1) - mean1);
  }
  var0 /= n;
  var1 /= n;

  CHECK(fit.model.means(0, 0) == doctest::Approx(mean0).epsilon(1e-9));
  CHECK(fit.model.means(0, 1) == doctest::Approx(mean1).epsilon(1e-9));
  CHECK(fit.model.covs(0, 0) == doctest::Approx(var0).epsilon(1e-9));
  CHECK(fit.model.covs(0, 1) == doctest::Approx(var1).epsilon(1e-9));
  CHECK(fit.model.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("gmm separates two tight spherical blobs") {
  Rng rng(77);
  const int n = 400;
  std::vector<double> xs;
  std::vector<int> truth;
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    truth.push_back(c);
    const double cx = c == 0 ? -2.0 : 2.0;
    xs.push_back(rng.normal(cx, 0.3));
    xs.push_back(rng.normal(0.0, 0.3));
  }
  GmmResult fit = gmm_em_fit(Tensor({n, 2}, xs), 2, {.seed = 5});
  auto pred = hard_labels(fit.resp);
  CHECK(clustering_error(pred, truth, 2).error <= 0.02);
  // Responsibilities are nearly hard.
  int soft_rows = 0;
  for (int i = 0; i < n; ++i)
    if (std::max(fit.resp(i, 0), fit.resp(i, 1)) < 0.99) ++soft_rows;
  CHECK(soft_rows <= n / 50);
}

TEST_CASE("gmm log-likelihood is monotone across seeds and covariance modes") {
  Rng rng(78);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 150, d = 2;
    std::vector<double> xs(static_cast<std::size_t>(n) * d);
    for (auto& v : xs) v = rng.uniform(-1, 1) + (rng.uniform() < 0.5 ? 1.5 : -1.5);
    GmmConfig cfg;
    cfg.seed = 200 + trial;
    cfg.full_cov = trial % 2 == 1;
    cfg.max_iters = 60;
    GmmResult fit = gmm_em_fit(Tensor({n, d}, xs), 3, cfg);
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-9);
    }
  }
}

TEST_CASE("full covariance captures correlated components") {
  Rng rng(79);
  const int n = 600;
  std::vector<double> xs;
  std::vector<int> truth;
  // Two zero-mean components distinguished only by correlation sign.
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    truth.push_back(c);
    const double a = rng.normal(0, 1.0), b = rng.normal(0, 0.08);
    const double u = (a + b) / std::numbers::sqrt2;
    const double v = (c == 0 ? a - b : b - a) / std::numbers::sqrt2;
    xs.push_back(u);
    xs.push_back(v);
  }
  GmmConfig cfg;
  cfg.full_cov = true;
  cfg.seed = 11;
  GmmResult fit = gmm_em_fit(Tensor({n, 2}, xs), 2, cfg);
  auto pred = hard_labels(fit.resp);
  CHECK(clustering_error(pred, truth, 2).error <= 0.10);
}

TEST_CASE("baseline argument validation") {
  Tensor x({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(kmeans_fit(x, 4, {}), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_fit(x, 0, {}), std::invalid_argument);
  CHECK_THROWS_AS(gmm_em_fit(x, 3, {}), std::invalid_argument);
  CHECK_THROWS_AS(gmm_em_fit(Tensor({2}, {1, 2}), 1, {}), std::invalid_argument);
}
