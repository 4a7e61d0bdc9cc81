#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ganem/rng.hpp"
#include "ganem/tensor.hpp"

namespace ganem {

enum class Activation { Identity, LeakyRelu, Tanh, Sigmoid, Softmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// One fully connected layer. Weight is stored [out x in] so a batch
// [n x in] maps to [n x out] via x * W^T + b.
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::Identity;
  double slope = 0.2;  // used by LeakyRelu only

  int in_dim() const { return weight.cols(); }
  int out_dim() const { return weight.rows(); }
};

// Scaled-normal weights (variance 1/in), zero bias.
DenseLayer make_dense(int in, int out, Activation act, Rng& rng);

struct Mlp {
  std::vector<DenseLayer> layers;

  int in_dim() const;
  int out_dim() const;
  // Stable order: layer0.weight, layer0.bias, layer1.weight, ...
  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  std::vector<std::pair<std::string, const Tensor*>> named_params(const std::string& prefix) const;
};

Mlp make_mlp(const std::vector<int>& widths, Activation hidden, Activation output, Rng& rng);

// Leaf handles for one recorded forward pass, in params() order; used to
// read gradients after backward.
struct ParamLeaves {
  std::vector<Tensor> leaves;
};

// Runs the stack on a [n x in] batch (or a single [in] row). When
// `trainable` is set, parameters are recorded as gradient leaves and, if
// `leaves` is non-null, the handles are appended in params() order.
Tensor mlp_forward(Graph& g, const Mlp& mlp, const Tensor& input, bool trainable = false,
                   ParamLeaves* leaves = nullptr);

// RMSprop with running squared-gradient smoothing:
//   acc <- decay*acc + (1-decay)*grad^2;  param <- param - lr*grad/sqrt(acc+eps)
// Accumulators are keyed by parameter position, so one optimizer instance
// must always be stepped with the same parameter list.
class Rmsprop {
 public:
  explicit Rmsprop(double lr = 2e-4, double decay = 0.98, double eps = 1e-8);

  void step(const std::vector<Tensor*>& params, const std::vector<std::span<const double>>& grads);
  // Convenience: pull gradients of the recorded leaves from the graph.
  void step(Mlp& mlp, const Graph& g, const ParamLeaves& leaves);

  double lr() const { return lr_; }
  void scale_lr(double factor) { lr_ *= factor; }

  const std::vector<std::vector<double>>& accumulators() const { return acc_; }

 private:
  double lr_, decay_, eps_;
  std::vector<std::vector<double>> acc_;
};

// Clamps every parameter value into [-c, c].
void clip_weights(Mlp& mlp, double c);

// Little-endian binary checkpoint: "GEMC", version, count, per-tensor
// {name, rank, extents} manifest, then raw f64 payloads in manifest order.
void save_params(std::ostream& out, const std::vector<std::pair<std::string, const Tensor*>>& tensors);
void save_params_file(const std::string& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_params(std::istream& in);
std::vector<std::pair<std::string, Tensor>> load_params_file(const std::string& path);

// Copies loaded tensors into the model's named parameters; every name must
// resolve and every shape must match.
void assign_params(const std::vector<std::pair<std::string, Tensor>>& loaded,
                   const std::vector<std::pair<std::string, Tensor*>>& dest);

}  // namespace ganem
