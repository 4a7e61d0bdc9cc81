#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ganem/nn.hpp"

using namespace ganem;

namespace {

Mlp two_layer(Rng& rng) {
  return make_mlp({3, 5, 2}, Activation::LeakyRelu, Activation::Identity, rng);
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  Mlp mlp;
  DenseLayer l;
  l.weight = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  l.bias = Tensor::zeros({3});
  mlp.layers.push_back(l);
  Graph g;
  Tensor x({2, 3}, {1, -2, 3, 4, 5, -6});
  Tensor y = mlp_forward(g, mlp, x);
  for (int i = 0; i < 6; ++i) CHECK(y(i) == x(i));
}

TEST_CASE("zero weights yield the bias for any input") {
  Mlp mlp;
  DenseLayer l;
  l.weight = Tensor::zeros({2, 4});
  l.bias = Tensor({2}, {0.3, -0.7});
  mlp.layers.push_back(l);
  Graph g;
  Tensor x({3, 4}, std::vector<double>(12, 123.0));
  Tensor y = mlp_forward(g, mlp, x);
  for (int r = 0; r < 3; ++r) {
    CHECK(y(r, 0) == 0.3);
    CHECK(y(r, 1) == -0.7);
  }
}

TEST_CASE("two-layer forward matches a hand-rolled evaluation") {
  Rng rng(101);
  Mlp mlp = two_layer(rng);
  Tensor x({1, 3}, {0.4, -0.9, 1.7});
  Graph g;
  Tensor y = mlp_forward(g, mlp, x);

  std::vector<double> h(5);
  for (int o = 0; o < 5; ++o) {
    double acc = mlp.layers[0].bias(o);
    for (int i = 0; i < 3; ++i) acc += mlp.layers[0].weight(o, i) * x(0, i);
    h[o] = acc >= 0 ? acc : 0.2 * acc;
  }
  for (int o = 0; o < 2; ++o) {
    double acc = mlp.layers[1].bias(o);
    for (int i = 0; i < 5; ++i) acc += mlp.layers[1].weight(o, i) * h[i];
    CHECK(y(0, o) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("vector input runs as a single row") {
  Rng rng(102);
  Mlp mlp = two_layer(rng);
  Graph g;
  Tensor x({3}, {0.1, 0.2, 0.3});
  Tensor y = mlp_forward(g, mlp, x);
  REQUIRE(y.shape() == Shape{2});
  Tensor y2 = mlp_forward(g, mlp, Tensor({1, 3}, {0.1, 0.2, 0.3}));
  CHECK(y(0) == y2(0, 0));
  CHECK(y(1) == y2(0, 1));
}

TEST_CASE("width mismatch names the offending layer") {
  Rng rng(103);
  Mlp mlp = two_layer(rng);
  Graph g;
  Tensor bad({1, 4}, {1, 2, 3, 4});
  CHECK_THROWS_WITH_AS(mlp_forward(g, mlp, bad),
                       "mlp_forward: layer 0 expects width 3, got 4", std::invalid_argument);
}

TEST_CASE("trainable forward exposes gradient leaves") {
  Rng rng(104);
  Mlp mlp = two_layer(rng);
  Graph g;
  ParamLeaves leaves;
  Tensor y = mlp_forward(g, mlp, Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), true, &leaves);
  REQUIRE(leaves.leaves.size() == 4);
  g.backward(g.mean(g.mul(y, y)));
  bool any_nonzero = false;
  for (double d : g.grad_values(leaves.leaves[0])) any_nonzero = any_nonzero || d != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("rmsprop matches the recurrence on a frozen scalar") {
  Mlp mlp;
  DenseLayer l;
  l.weight = Tensor::zeros({1, 1});
  l.bias = Tensor::zeros({1});
  mlp.layers.push_back(l);

  Rmsprop opt(2e-4, 0.98, 1e-8);
  std::vector<Tensor*> params = {&mlp.layers[0].weight};
  std::vector<double> grad = {1.0};
  std::vector<std::span<const double>> grads = {std::span<const double>(grad)};

  opt.step(params, grads);
  const double acc1 = 0.02 * 1.0;
  const double want1 = -2e-4 / std::sqrt(acc1 + 1e-8);
  CHECK(opt.accumulators()[0][0] == doctest::Approx(acc1).epsilon(1e-15));
  CHECK(mlp.layers[0].weight(0) == doctest::Approx(want1).epsilon(1e-12));

  opt.step(params, grads);
  const double acc2 = 0.98 * acc1 + 0.02;
  const double want2 = want1 - 2e-4 / std::sqrt(acc2 + 1e-8);
  CHECK(opt.accumulators()[0][0] == doctest::Approx(acc2).epsilon(1e-15));
  CHECK(mlp.layers[0].weight(0) == doctest::Approx(want2).epsilon(1e-12));
}

TEST_CASE("rmsprop with zero gradient keeps parameters and decays the accumulator") {
  Mlp mlp;
  DenseLayer l;
  l.weight = Tensor({1, 2}, {0.5, -0.5});
  l.bias = Tensor::zeros({2});
  mlp.layers.push_back(l);
  Rmsprop opt;
  std::vector<Tensor*> params = {&mlp.layers[0].weight};

  std::vector<double> g1 = {2.0, -1.0};
  opt.step(params, {std::span<const double>(g1)});
  const double before0 = opt.accumulators()[0][0];
  const Tensor snapshot = mlp.layers[0].weight.detached();

  std::vector<double> g0 = {0.0, 0.0};
  opt.step(params, {std::span<const double>(g0)});
  CHECK(mlp.layers[0].weight(0) == snapshot(0));
  CHECK(mlp.layers[0].weight(1) == snapshot(1));
  CHECK(opt.accumulators()[0][0] == doctest::Approx(0.98 * before0).epsilon(1e-15));
}

TEST_CASE("rmsprop validation") {
  CHECK_THROWS_AS(Rmsprop(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(Rmsprop(1e-3, 1.5), std::invalid_argument);
  Mlp mlp;
  DenseLayer l;
  l.weight = Tensor::zeros({1, 2});
  l.bias = Tensor::zeros({2});
  mlp.layers.push_back(l);
  Rmsprop opt;
  std::vector<double> wrong = {1.0};
  CHECK_THROWS_AS(opt.step({&mlp.layers[0].weight}, {std::span<const double>(wrong)}),
                  std::invalid_argument);
}

TEST_CASE("clip_weights saturates exactly at the bound") {
  Rng rng(7);
  Mlp mlp = make_mlp({4, 8, 4}, Activation::LeakyRelu, Activation::Identity, rng);
  Mlp reference;
  for (const auto& l : mlp.layers) {
    DenseLayer copy;
    copy.weight = l.weight.detached();
    copy.bias = l.bias.detached();
    reference.layers.push_back(copy);
  }
  const double c = 0.01;
  clip_weights(mlp, c);
  double maxabs = 0;
  auto mp = mlp.params();
  auto rp = reference.params();
  for (std::size_t i = 0; i < mp.size(); ++i) {
    auto vm = mp[i]->values();
    auto vr = rp[i]->values();
    for (std::size_t j = 0; j < vm.size(); ++j) {
      CHECK(vm[j] == std::min(c, std::max(-c, vr[j])));
      maxabs = std::max(maxabs, std::fabs(vm[j]));
    }
  }
  CHECK(maxabs <= c);

  SUBCASE("already-inside values unchanged") {
    Mlp small;
    DenseLayer l;
    l.weight = Tensor({1, 2}, {0.005, -0.003});
    l.bias = Tensor::zeros({2});
    small.layers.push_back(l);
    clip_weights(small, c);
    CHECK(small.layers[0].weight(0) == 0.005);
    CHECK(small.layers[0].weight(1) == -0.003);
  }
  SUBCASE("single saturated value") {
    Mlp small;
    DenseLayer l;
    l.weight = Tensor({1, 1}, {5.0});
    l.bias = Tensor::zeros({1});
    small.layers.push_back(l);
    clip_weights(small, 0.01);
    CHECK(small.layers[0].weight(0) == 0.01);
  }
  CHECK_THROWS_AS(clip_weights(mlp, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(clip_weights(mlp, -0.1), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(55);
  Mlp mlp = make_mlp({3, 6, 2}, Activation::LeakyRelu, Activation::Tanh, rng);
  std::stringstream buf;
  save_params(buf, mlp.named_params("net"));

  auto loaded = load_params(buf);
  REQUIRE(loaded.size() == 4);
  CHECK(loaded[0].first == "net.layer0.weight");
  CHECK(loaded[0].second.shape() == Shape{6, 3});

  Mlp fresh = make_mlp({3, 6, 2}, Activation::LeakyRelu, Activation::Tanh, rng);
  std::vector<std::pair<std::string, Tensor*>> dest;
  for (std::size_t i = 0; i < fresh.layers.size(); ++i) {
    dest.emplace_back("net.layer" + std::to_string(i) + ".weight", &fresh.layers[i].weight);
    dest.emplace_back("net.layer" + std::to_string(i) + ".bias", &fresh.layers[i].bias);
  }
  assign_params(loaded, dest);

  auto a = mlp.params();
  auto b = fresh.params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto va = a[i]->values();
    auto vb = b[i]->values();
    REQUIRE(va.size() == vb.size());
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }

  // Forward outputs identical through the round trip.
  Graph g;
  Tensor x({1, 3}, {0.2, -0.4, 0.6});
  Tensor y1 = mlp_forward(g, mlp, x);
  Tensor y2 = mlp_forward(g, fresh, x);
  CHECK(y1(0, 0) == y2(0, 0));
  CHECK(y1(0, 1) == y2(0, 1));
}

TEST_CASE("checkpoint rejects corruption without partial state") {
  Rng rng(56);
  Mlp mlp = make_mlp({2, 3, 2}, Activation::LeakyRelu, Activation::Identity, rng);
  std::stringstream buf;
  save_params(buf, mlp.named_params("net"));
  const std::string full = buf.str();

  SUBCASE("truncated payload") {
    std::stringstream cut(full.substr(0, full.size() - 10));
    CHECK_THROWS_AS(load_params(cut), std::runtime_error);
  }
  SUBCASE("truncated manifest") {
    std::stringstream cut(full.substr(0, 20));
    CHECK_THROWS_AS(load_params(cut), std::runtime_error);
  }
  SUBCASE("bad magic") {
    std::string mangled = full;
    mangled[0] = 'X';
    std::stringstream bad(mangled);
    CHECK_THROWS_AS(load_params(bad), std::runtime_error);
  }
  SUBCASE("unsupported version") {
    std::string mangled = full;
    mangled[4] = 99;
    std::stringstream bad(mangled);
    CHECK_THROWS_WITH_AS(load_params(bad), "checkpoint: unsupported version 99 (expected 1)",
                         std::runtime_error);
  }
  SUBCASE("shape mismatch on assignment") {
    std::stringstream ok(full);
    auto loaded = load_params(ok);
    Tensor wrong = Tensor::zeros({4, 2});
    std::vector<std::pair<std::string, Tensor*>> dest = {{"net.layer0.weight", &wrong}};
    CHECK_THROWS_AS(assign_params(loaded, dest), std::runtime_error);
  }
  SUBCASE("missing tensor on assignment") {
    std::stringstream ok(full);
    auto loaded = load_params(ok);
    Tensor slot = Tensor::zeros({3, 2});
    std::vector<std::pair<std::string, Tensor*>> dest = {{"net.layer9.weight", &slot}};
    CHECK_THROWS_AS(assign_params(loaded, dest), std::runtime_error);
  }
}

TEST_CASE("checkpoint file helpers") {
  Rng rng(57);
  Mlp mlp = make_mlp({2, 2}, Activation::Identity, Activation::Identity, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ganem_test_ckpt.gemc").string();
  save_params_file(path, mlp.named_params("m"));
  auto loaded = load_params_file(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].first == "m.layer0.bias");
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_params_file(path), std::runtime_error);
}

TEST_CASE("activation names round trip") {
  for (Activation a : {Activation::Identity, Activation::LeakyRelu, Activation::Tanh,
                       Activation::Sigmoid, Activation::Softmax}) {
    CHECK(activation_from_name(activation_name(a)) == a);
  }
  CHECK_THROWS_AS(activation_from_name("relu6"), std::invalid_argument);
}
