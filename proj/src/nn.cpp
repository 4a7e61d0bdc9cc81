#include "ganem/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }
[[noreturn]] void io_fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
  }
  fail("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softmax") return Activation::Softmax;
  fail("activation_from_name: unknown activation '" + name + "'");
}

DenseLayer make_dense(int in, int out, Activation act, Rng& rng) {
  if (in <= 0 || out <= 0) fail("make_dense: dimensions must be positive");
  DenseLayer layer;
  layer.weight = init_params({out, in}, Init::scaled_normal(in), rng);
  layer.bias = Tensor::zeros({out});
  layer.activation = act;
  return layer;
}

int Mlp::in_dim() const {
  if (layers.empty()) fail("Mlp::in_dim: empty network");
  return layers.front().in_dim();
}

int Mlp::out_dim() const {
  if (layers.empty()) fail("Mlp::out_dim: empty network");
  return layers.back().out_dim();
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::params() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Mlp::named_params(const std::string& prefix) const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + ".layer" + std::to_string(i) + ".weight", &layers[i].weight);
    out.emplace_back(prefix + ".layer" + std::to_string(i) + ".bias", &layers[i].bias);
  }
  return out;
}

Mlp make_mlp(const std::vector<int>& widths, Activation hidden, Activation output, Rng& rng) {
  if (widths.size() < 2) fail("make_mlp: need at least input and output widths");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = (i + 2 == widths.size());
    mlp.layers.push_back(make_dense(widths[i], widths[i + 1], last ? output : hidden, rng));
  }
  return mlp;
}

namespace {

Tensor apply_activation(Graph& g, const Tensor& x, const DenseLayer& layer) {
  switch (layer.activation) {
    case Activation::Identity: return x;
    case Activation::LeakyRelu: return g.leaky_relu(x, layer.slope);
    case Activation::Tanh: return g.tanh(x);
    case Activation::Sigmoid: return g.sigmoid(x);
    case Activation::Softmax: return g.softmax(x);
  }
  fail("apply_activation: unknown activation");
}

}  // namespace

Tensor mlp_forward(Graph& g, const Mlp& mlp, const Tensor& input, bool trainable,
                   ParamLeaves* leaves) {
  if (mlp.layers.empty()) fail("mlp_forward: empty network");
  Tensor x = input;
  const bool batched = input.shape().size() == 2;
  const int width = batched ? input.cols() : static_cast<int>(input.size());
  if (!batched) x = g.reshape(g.leaf(input, false), {1, width});

  int cur = width;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const DenseLayer& layer = mlp.layers[i];
    if (cur != layer.in_dim()) {
      std::ostringstream msg;
      msg << "mlp_forward: layer " << i << " expects width " << layer.in_dim() << ", got " << cur;
      fail(msg.str());
    }
    Tensor w = g.leaf(layer.weight, trainable);
    Tensor b = g.leaf(layer.bias, trainable);
    if (leaves) {
      leaves->leaves.push_back(w);
      leaves->leaves.push_back(b);
    }
    x = apply_activation(g, g.add(g.matmul_nt(x, w), b), layer);
    cur = layer.out_dim();
  }
  if (!batched) x = g.reshape(x, {cur});
  return x;
}

Rmsprop::Rmsprop(double lr, double decay, double eps) : lr_(lr), decay_(decay), eps_(eps) {
  if (lr <= 0) fail("Rmsprop: learning rate must be positive");
  if (decay <= 0 || decay >= 1) fail("Rmsprop: decay must lie in (0,1)");
  if (eps <= 0) fail("Rmsprop: epsilon must be positive");
}

void Rmsprop::step(const std::vector<Tensor*>& params,
                   const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) fail("Rmsprop::step: params/grads count mismatch");
  if (acc_.empty()) acc_.resize(params.size());
  if (acc_.size() != params.size()) fail("Rmsprop::step: optimizer bound to a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i]->values_mut();
    const auto& grad = grads[i];
    if (grad.size() != values.size()) {
      std::ostringstream msg;
      msg << "Rmsprop::step: parameter " << i << " has " << values.size() << " values but gradient has "
          << grad.size();
      fail(msg.str());
    }
    auto& acc = acc_[i];
    if (acc.empty()) acc.assign(values.size(), 0.0);
    for (std::size_t j = 0; j < values.size(); ++j) {
      acc[j] = decay_ * acc[j] + (1.0 - decay_) * grad[j] * grad[j];
      values[j] -= lr_ * grad[j] / std::sqrt(acc[j] + eps_);
    }
  }
}

void Rmsprop::step(Mlp& mlp, const Graph& g, const ParamLeaves& leaves) {
  auto params = mlp.params();
  if (params.size() != leaves.leaves.size()) fail("Rmsprop::step: leaf count mismatch");
  std::vector<std::span<const double>> grads;
  grads.reserve(leaves.leaves.size());
  for (const auto& leaf : leaves.leaves) grads.push_back(g.grad_values(leaf));
  step(params, grads);
}

void clip_weights(Mlp& mlp, double c) {
  if (c <= 0) fail("clip_weights: clip constant must be positive");
  for (Tensor* p : mlp.params())
    for (double& v : p->values_mut()) v = std::min(c, std::max(-c, v));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'G', 'E', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) io_fail(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

}  // namespace

void save_params(std::ostream& out, const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!t || t->empty()) fail("save_params: empty tensor '" + name + "'");
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t->shape().size()));
    for (int e : t->shape()) write_pod(out, static_cast<std::int32_t>(e));
  }
  for (const auto& [name, t] : tensors) {
    auto v = t->values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) io_fail("checkpoint: write failed");
}

void save_params_file(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail("checkpoint: cannot open '" + path + "' for writing");
  save_params(out, tensors);
}

std::vector<std::pair<std::string, Tensor>> load_params(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) io_fail("checkpoint: bad magic");
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kVersion) {
    std::ostringstream msg;
    msg << "checkpoint: unsupported version " << version << " (expected " << kVersion << ")";
    io_fail(msg.str());
  }
  const auto count = read_pod<std::uint64_t>(in, "tensor count");
  if (count > 1'000'000) io_fail("checkpoint: implausible tensor count");

  std::vector<std::pair<std::string, Shape>> manifest;
  manifest.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, "name length");
    if (name_len > 4096) io_fail("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) io_fail("checkpoint: truncated while reading name");
    const auto rank = read_pod<std::uint32_t>(in, "rank");
    if (rank > 8) io_fail("checkpoint: implausible rank");
    Shape shape(rank);
    for (auto& e : shape) {
      e = read_pod<std::int32_t>(in, "extent");
      if (e <= 0) io_fail("checkpoint: non-positive extent in manifest");
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }

  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (auto& [name, shape] : manifest) {
    std::vector<double> values(static_cast<std::size_t>(shape_size(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) io_fail("checkpoint: truncated payload for '" + name + "'");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> load_params_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("checkpoint: cannot open '" + path + "' for reading");
  return load_params(in);
}

void assign_params(const std::vector<std::pair<std::string, Tensor>>& loaded,
                   const std::vector<std::pair<std::string, Tensor*>>& dest) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : loaded) by_name[name] = &t;
  for (const auto& [name, slot] : dest) {
    auto it = by_name.find(name);
    if (it == by_name.end()) io_fail("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape() != slot->shape()) {
      io_fail("checkpoint: shape mismatch for '" + name + "': stored " + shape_str(it->second->shape()) +
              ", model " + shape_str(slot->shape()));
    }
    *slot = it->second->detached();
  }
}

}  // namespace ganem
