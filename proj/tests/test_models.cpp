#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ganem/models.hpp"

using namespace ganem;

namespace {

constexpr int kNoise = 4;
constexpr int kClasses = 3;
constexpr int kData = 5;

Generator test_generator(std::uint64_t seed) {
  Rng rng(seed);
  return make_generator(kNoise, kClasses, kData, {8, 8}, Activation::Tanh, rng);
}

}  // namespace

TEST_CASE("onehot_rows") {
  Tensor oh = onehot_rows({2, 0}, 3);
  REQUIRE(oh.shape() == Shape{2, 3});
  CHECK(oh(0, 2) == 1.0);
  CHECK(oh(0, 0) == 0.0);
  CHECK(oh(1, 0) == 1.0);
  CHECK_THROWS_AS(onehot_rows({3}, 3), std::invalid_argument);
  CHECK_THROWS_AS(onehot_rows({-1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(onehot_rows({}, 3), std::invalid_argument);
}

TEST_CASE("sample_noise ranges and determinism") {
  Rng a(9), b(9);
  Tensor u = sample_noise(a, 50, 4, NoiseKind::Uniform);
  Tensor u2 = sample_noise(b, 50, 4, NoiseKind::Uniform);
  for (std::int64_t i = 0; i < u.size(); ++i) {
    CHECK(u(static_cast<int>(i)) >= -1.0);
    CHECK(u(static_cast<int>(i)) < 1.0);
    CHECK(u(static_cast<int>(i)) == u2(static_cast<int>(i)));
  }
  Tensor n = sample_noise(a, 50, 4, NoiseKind::Gaussian);
  bool outside = false;
  for (std::int64_t i = 0; i < n.size(); ++i) outside = outside || std::fabs(n(static_cast<int>(i))) > 1.0;
  CHECK(outside);  // a 200-draw Gaussian sample essentially surely leaves [-1,1]
}

TEST_CASE("generator determinism and class sensitivity") {
  Generator gen = test_generator(301);
  std::vector<double> z = {0.1, -0.2, 0.3, -0.4};

  auto x1 = generate(gen, z, 1);
  auto x2 = generate(gen, z, 1);
  REQUIRE(x1.size() == kData);
  CHECK(x1 == x2);

  auto x3 = generate(gen, z, 2);
  bool differs = false;
  for (std::size_t i = 0; i < x1.size(); ++i) differs = differs || x1[i] != x3[i];
  CHECK(differs);

  CHECK_THROWS_AS(generate(gen, z, 3), std::invalid_argument);
  CHECK_THROWS_AS(generate(gen, z, -1), std::invalid_argument);
  std::vector<double> short_z = {0.1};
  CHECK_THROWS_AS(generate(gen, short_z, 0), std::invalid_argument);
}

TEST_CASE("zero-weight generator emits squashed bias") {
  Generator gen = test_generator(302);
  for (auto& l : gen.net.layers) {
    for (double& v : l.weight.values_mut()) v = 0.0;
    for (double& v : l.bias.values_mut()) v = 0.0;
  }
  gen.net.layers.back().bias.values_mut()[0] = 0.7;
  std::vector<double> z = {1, 2, 3, 4};
  auto xa = generate(gen, z, 0);
  std::vector<double> zeros(kNoise, 0.0);
  auto xb = generate(gen, zeros, 2);
  CHECK(xa == xb);
  CHECK(xa[0] == doctest::Approx(std::tanh(0.7)));
  CHECK(xa[1] == doctest::Approx(0.0));
}

TEST_CASE("generate equals manual concat through the raw network") {
  Generator gen = test_generator(303);
  std::vector<double> z = {0.5, 0.25, -0.75, 0.0};
  const int c = 1;
  auto via_gen = generate(gen, z, c);

  std::vector<double> input(z.begin(), z.end());
  for (int i = 0; i < kClasses; ++i) input.push_back(i == c ? 1.0 : 0.0);
  Graph g;
  Tensor y = mlp_forward(g, gen.net, Tensor({static_cast<int>(input.size())}, input));
  for (int i = 0; i < kData; ++i) CHECK(via_gen[i] == y(i));
}

TEST_CASE("generate_batch shapes and validation") {
  Generator gen = test_generator(304);
  Rng rng(1);
  Graph g;
  Tensor z = sample_noise(rng, 6, kNoise, NoiseKind::Uniform);
  Tensor x = generate_batch(g, gen, z, {0, 1, 2, 0, 1, 2});
  REQUIRE(x.shape() == Shape{6, kData});
  for (std::int64_t i = 0; i < x.size(); ++i) {
    CHECK(x(static_cast<int>(i)) >= -1.0);
    CHECK(x(static_cast<int>(i)) <= 1.0);
  }
  CHECK_THROWS_AS(generate_batch(g, gen, z, {0, 1}), std::invalid_argument);
}

TEST_CASE("discriminator outputs are independent sigmoids over logits") {
  Rng rng(305);
  Discriminator disc = make_discriminator(kData, kClasses, {8, 8}, rng);
  std::vector<double> x = {0.3, -0.6, 0.9, 0.1, -0.2};
  auto [probs, logits] = discriminate(disc, x);
  REQUIRE(probs.size() == kClasses + 1);
  REQUIRE(logits.size() == kClasses + 1);

  double sum = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(probs[i] > 0.0);
    CHECK(probs[i] < 1.0);
    const double sig = 1.0 / (1.0 + std::exp(-logits[i]));
    CHECK(std::fabs(probs[i] - sig) <= 1e-12);
    sum += probs[i];
  }
  CHECK(std::fabs(sum - 1.0) > 1e-6);  // heads are not jointly normalized

  SUBCASE("scaling one head leaves the others unchanged") {
    auto before = discriminate(disc, x).first;
    auto& head = disc.net.layers.back();
    const int cols = head.weight.cols();
    for (int j = 0; j < cols; ++j) head.weight.values_mut()[0 * cols + j] *= 3.0;
    head.bias.values_mut()[0] += 1.0;
    auto after = discriminate(disc, x).first;
    CHECK(after[0] != before[0]);
    for (std::size_t i = 1; i < before.size(); ++i) CHECK(after[i] == before[i]);
  }
}

TEST_CASE("zero discriminator answers one half everywhere") {
  Rng rng(306);
  Discriminator disc = make_discriminator(kData, kClasses, {4}, rng);
  for (auto& l : disc.net.layers) {
    for (double& v : l.weight.values_mut()) v = 0.0;
    for (double& v : l.bias.values_mut()) v = 0.0;
  }
  auto [probs, logits] = discriminate(disc, std::vector<double>{1, 2, 3, 4, 5});
  for (double p : probs) CHECK(p == 0.5);
  for (double l : logits) CHECK(l == 0.0);
}

TEST_CASE("discriminator input width is validated") {
  Rng rng(307);
  Discriminator disc = make_discriminator(kData, kClasses, {4}, rng);
  Graph g;
  CHECK_THROWS_AS(discriminate_batch(g, disc, Tensor({1, 2}, {1, 2})), std::invalid_argument);
}

TEST_CASE("enet predictions live on the simplex") {
  Rng rng(308);
  ENet enet = make_enet(kData, kClasses, {8, 8}, 0, rng);
  Rng data_rng(309);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(kData);
    for (auto& v : x) v = data_rng.uniform(-2, 2);
    auto p = e_predict(enet, x);
    REQUIRE(p.size() == kClasses);
    double sum = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(e_embed(enet, std::vector<double>(kData, 0.0)), std::invalid_argument);
}

TEST_CASE("zero output head gives the uniform simplex") {
  Rng rng(310);
  ENet enet = make_enet(kData, kClasses, {6}, 0, rng);
  auto& out = enet.net.layers.back();
  for (double& v : out.weight.values_mut()) v = 0.0;
  for (double& v : out.bias.values_mut()) v = 0.0;
  auto p = e_predict(enet, std::vector<double>{5, 4, 3, 2, 1});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / kClasses).epsilon(1e-15));
}

TEST_CASE("bottleneck embeddings have the configured width") {
  Rng rng(311);
  ENet enet = make_enet(kData, kClasses, {8, 8}, 2, rng);
  REQUIRE(enet.net.layers.size() == 4);
  CHECK(enet.bottleneck_layer == 2);
  auto emb = e_embed(enet, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(emb.size() == 2);

  // The embedding is exactly the bottleneck activation feeding the head.
  Graph g;
  Tensor x({1, kData}, {0.1, 0.2, 0.3, 0.4, 0.5});
  Tensor full = e_predict_batch(g, enet, x);
  Tensor partial = e_embed_batch(g, enet, x);
  Mlp head_only;
  head_only.layers.push_back(enet.net.layers.back());
  Tensor via_head = mlp_forward(g, head_only, partial);
  for (int j = 0; j < kClasses; ++j)
    CHECK(full(0, j) == doctest::Approx(via_head(0, j)).epsilon(1e-15));
}
