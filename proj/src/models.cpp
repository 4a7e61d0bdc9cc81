#include "ganem/models.hpp"

#include <sstream>
#include <stdexcept>

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::vector<int> widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w;
  w.push_back(in);
  for (int h : hidden) w.push_back(h);
  w.push_back(out);
  return w;
}

void check_data_width(const Tensor& x, int want, const char* who) {
  const int got = x.shape().size() == 2 ? x.cols() : static_cast<int>(x.size());
  if (got != want) {
    std::ostringstream msg;
    msg << who << ": input width " << got << " does not match data dimension " << want;
    fail(msg.str());
  }
}

}  // namespace

Tensor onehot_rows(const std::vector<int>& classes, int k) {
  if (classes.empty()) fail("onehot_rows: empty class list");
  std::vector<double> values(classes.size() * static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= k) {
      std::ostringstream msg;
      msg << "onehot_rows: class " << classes[i] << " out of range [0, " << k << ")";
      fail(msg.str());
    }
    values[i * k + classes[i]] = 1.0;
  }
  return Tensor({static_cast<int>(classes.size()), k}, std::move(values));
}

Tensor sample_noise(Rng& rng, int n, int dim, NoiseKind kind) {
  if (n <= 0 || dim <= 0) fail("sample_noise: n and dim must be positive");
  std::vector<double> values(static_cast<std::size_t>(n) * dim);
  for (auto& v : values) v = kind == NoiseKind::Uniform ? rng.uniform(-1.0, 1.0) : rng.normal();
  return Tensor({n, dim}, std::move(values));
}

Generator make_generator(int noise_dim, int num_classes, int data_dim,
                         const std::vector<int>& hidden, Activation output_act, Rng& rng) {
  if (noise_dim <= 0 || num_classes <= 0 || data_dim <= 0)
    fail("make_generator: dimensions must be positive");
  Generator gen;
  gen.noise_dim = noise_dim;
  gen.num_classes = num_classes;
  gen.net = make_mlp(widths(noise_dim + num_classes, hidden, data_dim), Activation::LeakyRelu,
                     output_act, rng);
  return gen;
}

Tensor generate_batch(Graph& g, const Generator& gen, const Tensor& z,
                      const std::vector<int>& classes, bool trainable, ParamLeaves* leaves) {
  if (z.shape().size() != 2 || z.cols() != gen.noise_dim)
    fail("generate_batch: noise must be [n x " + std::to_string(gen.noise_dim) + "], got " +
         shape_str(z.shape()));
  if (static_cast<int>(classes.size()) != z.rows())
    fail("generate_batch: class count does not match noise rows");
  Tensor input = g.concat(g.constant(z), g.constant(onehot_rows(classes, gen.num_classes)), 1);
  return mlp_forward(g, gen.net, input, trainable, leaves);
}

std::vector<double> generate(const Generator& gen, std::span<const double> z, int c) {
  if (static_cast<int>(z.size()) != gen.noise_dim)
    fail("generate: noise size " + std::to_string(z.size()) + " does not match noise dimension " +
         std::to_string(gen.noise_dim));
  if (c < 0 || c >= gen.num_classes)
    fail("generate: class " + std::to_string(c) + " out of range [0, " +
         std::to_string(gen.num_classes) + ")");
  Graph g;
  Tensor zt({1, gen.noise_dim}, std::vector<double>(z.begin(), z.end()));
  Tensor out = generate_batch(g, gen, zt, {c});
  auto v = out.values();
  return {v.begin(), v.end()};
}

Discriminator make_discriminator(int data_dim, int num_classes, const std::vector<int>& hidden,
                                 Rng& rng) {
  if (data_dim <= 0 || num_classes <= 0) fail("make_discriminator: dimensions must be positive");
  Discriminator disc;
  disc.num_classes = num_classes;
  disc.net = make_mlp(widths(data_dim, hidden, num_classes + 1), Activation::LeakyRelu,
                      Activation::Identity, rng);
  return disc;
}

DiscOutput discriminate_batch(Graph& g, const Discriminator& disc, const Tensor& x, bool trainable,
                              ParamLeaves* leaves) {
  check_data_width(x, disc.data_dim(), "discriminate_batch");
  DiscOutput out;
  out.logits = mlp_forward(g, disc.net, x, trainable, leaves);
  out.probs = g.sigmoid(out.logits);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> discriminate(const Discriminator& disc,
                                                                 std::span<const double> x) {
  Graph g;
  Tensor xt({1, disc.data_dim()}, std::vector<double>(x.begin(), x.end()));
  DiscOutput out = discriminate_batch(g, disc, xt);
  auto p = out.probs.values();
  auto l = out.logits.values();
  return {{p.begin(), p.end()}, {l.begin(), l.end()}};
}

ENet make_enet(int data_dim, int num_classes, const std::vector<int>& hidden, int bottleneck,
               Rng& rng) {
  if (data_dim <= 0 || num_classes <= 0) fail("make_enet: dimensions must be positive");
  if (bottleneck < 0) fail("make_enet: bottleneck width must be nonnegative");
  ENet enet;
  enet.num_classes = num_classes;
  enet.bottleneck = bottleneck;
  std::vector<int> all_hidden = hidden;
  if (bottleneck > 0) all_hidden.push_back(bottleneck);
  enet.net = make_mlp(widths(data_dim, all_hidden, num_classes), Activation::LeakyRelu,
                      Activation::Softmax, rng);
  if (bottleneck > 0) enet.bottleneck_layer = static_cast<int>(enet.net.layers.size()) - 2;
  return enet;
}

Tensor e_predict_batch(Graph& g, const ENet& enet, const Tensor& x, bool trainable,
                       ParamLeaves* leaves) {
  check_data_width(x, enet.data_dim(), "e_predict_batch");
  return mlp_forward(g, enet.net, x, trainable, leaves);
}

std::vector<double> e_predict(const ENet& enet, std::span<const double> x) {
  Graph g;
  Tensor xt({1, enet.data_dim()}, std::vector<double>(x.begin(), x.end()));
  auto v = e_predict_batch(g, enet, xt).values();
  return {v.begin(), v.end()};
}

Tensor e_embed_batch(Graph& g, const ENet& enet, const Tensor& x) {
  if (enet.bottleneck_layer < 0) fail("e_embed_batch: no bottleneck configured");
  check_data_width(x, enet.data_dim(), "e_embed_batch");
  Mlp upto;
  upto.layers.assign(enet.net.layers.begin(),
                     enet.net.layers.begin() + enet.bottleneck_layer + 1);
  return mlp_forward(g, upto, x);
}

std::vector<double> e_embed(const ENet& enet, std::span<const double> x) {
  Graph g;
  Tensor xt({1, enet.data_dim()}, std::vector<double>(x.begin(), x.end()));
  auto v = e_embed_batch(g, enet, xt).values();
  return {v.begin(), v.end()};
}

}  // namespace ganem
