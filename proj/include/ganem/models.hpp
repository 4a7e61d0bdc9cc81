#pragma once

#include <vector>

#include "ganem/nn.hpp"
#include "ganem/rng.hpp"
#include "ganem/tensor.hpp"

namespace ganem {

// [n x K] rows of one-hot encodings.
Tensor onehot_rows(const std::vector<int>& classes, int k);

enum class NoiseKind { Uniform, Gaussian };  // Uniform on [-1,1]; Gaussian N(0,1)

Tensor sample_noise(Rng& rng, int n, int dim, NoiseKind kind);

// Conditional generator: input is [noise; onehot(class)], output a data
// vector. The output activation bounds the data range (tanh for data in
// [-1,1], sigmoid for [0,1], identity for unbounded).
struct Generator {
  int noise_dim = 0;
  int num_classes = 0;
  Mlp net;  // in = noise_dim + num_classes, out = data_dim

  int data_dim() const { return net.out_dim(); }
};

Generator make_generator(int noise_dim, int num_classes, int data_dim,
                         const std::vector<int>& hidden, Activation output_act, Rng& rng);

// z: [n x noise_dim]; classes: n values in [0, num_classes). Returns
// [n x data_dim] recorded on g.
Tensor generate_batch(Graph& g, const Generator& gen, const Tensor& z,
                      const std::vector<int>& classes, bool trainable = false,
                      ParamLeaves* leaves = nullptr);

// Single-sample convenience; validates the class index.
std::vector<double> generate(const Generator& gen, std::span<const double> z, int c);

// Shared trunk with num_classes class-real output units plus one extra
// real/fake unit. Each unit is an independent sigmoid over its own logit;
// the outputs are not jointly normalized. The final Identity layer of
// `net` produces the logits.
struct Discriminator {
  int num_classes = 0;
  Mlp net;  // out = num_classes + 1 logits

  int data_dim() const { return net.in_dim(); }
};

Discriminator make_discriminator(int data_dim, int num_classes, const std::vector<int>& hidden,
                                 Rng& rng);

struct DiscOutput {
  Tensor logits;  // [n x (K+1)]
  Tensor probs;   // sigmoid(logits), same shape
};

DiscOutput discriminate_batch(Graph& g, const Discriminator& disc, const Tensor& x,
                              bool trainable = false, ParamLeaves* leaves = nullptr);

// Single-sample convenience: (probabilities, logits), each of size K+1.
std::pair<std::vector<double>, std::vector<double>> discriminate(const Discriminator& disc,
                                                                 std::span<const double> x);

// Inverse generator: maps a data vector to a point on the K-simplex.
// With a bottleneck configured, a narrow layer sits immediately before the
// softmax output and its activations serve as a learned embedding.
struct ENet {
  int num_classes = 0;
  int bottleneck = 0;       // embedding width; 0 = none
  int bottleneck_layer = -1;  // index into net.layers, -1 = none
  Mlp net;                  // out = num_classes, softmax

  int data_dim() const { return net.in_dim(); }
};

ENet make_enet(int data_dim, int num_classes, const std::vector<int>& hidden, int bottleneck,
               Rng& rng);

// [n x K] simplex rows.
Tensor e_predict_batch(Graph& g, const ENet& enet, const Tensor& x, bool trainable = false,
                       ParamLeaves* leaves = nullptr);

std::vector<double> e_predict(const ENet& enet, std::span<const double> x);

// [n x bottleneck] activations of the bottleneck layer; error when no
// bottleneck is configured.
Tensor e_embed_batch(Graph& g, const ENet& enet, const Tensor& x);

std::vector<double> e_embed(const ENet& enet, std::span<const double> x);

}  // namespace ganem
