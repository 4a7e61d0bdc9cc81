#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganem/data.hpp"
#include "ganem/models.hpp"
#include "ganem/nn.hpp"
#include "ganem/rng.hpp"
#include "ganem/tensor.hpp"

namespace ganem {

// --------------------------------------------------------------------------
// Soft assignments and the mixture prior

// w is [N x K]: entries in [0,1], every row summing to 1 within 1e-9.
void validate_soft_assignment(const Tensor& w, int k);

// Nonnegative entries summing to 1 within 1e-12.
void validate_prior(const std::vector<double>& phi);

// phi_i = (sum_n w[n][i]) / N: soft per-cluster counts over the sample
// count. The result is renormalized so it sums to 1 within 1e-12.
std::vector<double> update_prior(const Tensor& w);

// --------------------------------------------------------------------------
// Configuration

struct EmConfig {
  int num_clusters = 2;  // K
  int em_iters = 20;     // outer EM iterations (n)
  int m_epochs = 5;      // M-step epochs over the real data (p)
  int e_updates = 0;     // E-net minibatch updates per E-step (q); 0 = auto
  int m_batch = 64;
  int e_batch = 256;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double lr_e = 2e-4;
  double rmsprop_decay = 0.98;
  double epsilon_stop = 0.05;     // labeled-error threshold ending fine-tuning
  double clip_c = 0.01;           // generator parameter clip bound
  double extra_unit_weight = 1.0; // weight on the real/fake head's BCE; 0 disables
  int noise_dim = 16;
  NoiseKind noise_kind = NoiseKind::Uniform;
  std::vector<int> gen_hidden = {64, 64};
  std::vector<int> disc_hidden = {64, 64};
  std::vector<int> enet_hidden = {64, 64};
  int bottleneck = 0;             // E-net embedding width; 0 = none
  double e_input_noise = 0.0;     // std of Gaussian jitter on the E-net's
                                  // training inputs (generated samples only),
                                  // clamped back to the data range; keeps the
                                  // E-net from keying on generator texture
  bool warm_start_enet = true;    // false: re-initialize the E-net every E-step
  int fine_tune_max_passes = 200; // hard cap on supervised fine-tune passes
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument on bad values
};

// Auto-scaled E-step budget: a 50000-sample run gets 1000 updates, smaller
// datasets proportionally fewer, never less than one full pass at e_batch.
int default_e_updates(int n_samples, int e_batch);

// All trainable state: GAN parameters, the mixture prior, and the E-net
// (tracked alongside even though it parameterizes the posterior, not the
// mixture itself).
struct ThetaState {
  Generator gen;
  Discriminator disc;
  ENet enet;
  std::vector<double> phi;
};

// --------------------------------------------------------------------------
// Losses (all return scalar tensors recorded on g)

// Differentiable per-row selection: out[i] = values[i][classes[i]], as an
// [n x 1] column. Columns other than the selected one get zero gradient.
Tensor select_class_columns(Graph& g, const Tensor& values, const std::vector<int>& classes);

// -(1/2) * mean_i exp(logit_i) over the batch of pre-sigmoid class-head
// logits on generated samples. Logits are capped at 30 before exp so early
// wild discriminators cannot overflow. Minimizing drives the class heads up.
Tensor generator_loss(Graph& g, const Tensor& class_logits);

// Soft-weighted discriminator objective, returned as a value to MINIMIZE:
//   -( mean_real sum_i w[i]*log d_real[i]  +  mean_fake sum_i log(1 - d_fake[i]) )
// d_* carry exactly K class-head probabilities per row; w rows must lie on
// the simplex within 1e-6. Probabilities are clamped to [1e-12, 1-1e-12]
// before the logs.
Tensor discriminator_loss(Graph& g, const Tensor& real_probs, const Tensor& w,
                          const Tensor& fake_probs);

// Plain binary cross entropy for the extra real/fake head: real rows target
// 1, fake rows target 0. Inputs are [n x 1] probability columns.
Tensor real_fake_bce(Graph& g, const Tensor& real_probs, const Tensor& fake_probs);

// Mean cross entropy between predicted simplex rows and onehot(classes).
Tensor enet_loss(Graph& g, const Tensor& predictions, const std::vector<int>& classes);

// --------------------------------------------------------------------------
// Class samplers (distinct seeded streams in the trainer)

std::vector<int> sample_classes_uniform(Rng& rng, int n, int k);
std::vector<int> sample_classes_prior(Rng& rng, int n, const std::vector<double>& phi);

// --------------------------------------------------------------------------
// Training driver

struct MStepStats {
  double g_loss = 0;  // mean generator loss over the step's G updates
  double d_loss = 0;  // mean class-head discriminator loss over D updates
  int g_updates = 0;
  int d_updates = 0;
};

struct EStepStats {
  double e_loss = 0;  // mean E-net loss over the step's updates
  int e_updates = 0;
};

struct FineTuneStats {
  double labeled_error = 0;  // error on the labeled subset after the step
  int passes = 0;            // supervised passes actually run
  bool reached_epsilon = false;
};

struct MetricsRow {
  int iteration = 0;
  double g_loss = 0;
  double d_loss = 0;
  double e_loss = 0;
  std::vector<double> phi;
  double clustering_err = 0;  // NaN when the dataset has no ground truth
  double labeled_err = 0;     // NaN outside semi-supervised runs
};

// CSV schema for the metrics trace. Columns: iteration, loss_g, loss_d,
// loss_e, phi_0..phi_{K-1}, clustering_error and, when `labeled` is set,
// labeled_error.
std::string metrics_csv_header(int k, bool labeled);
std::string metrics_csv_row(const MetricsRow& row, int k, bool labeled);

// Owns one EM run: model parameters, optimizer state, the current soft
// assignment, and all random streams. Single-threaded.
class GanEmTrainer {
 public:
  GanEmTrainer(Dataset data, EmConfig cfg);

  const EmConfig& config() const { return cfg_; }
  const Dataset& data() const { return data_; }
  ThetaState& state() { return state_; }
  const ThetaState& state() const { return state_; }
  const Tensor& soft_assignment() const { return w_; }

  // Updates phi from the current w, then runs m_epochs of alternating
  // generator/discriminator minibatch updates (one each per minibatch),
  // clipping every generator parameter into [-clip_c, clip_c] after each
  // generator update.
  MStepStats m_step();

  // Trains the E-net on (generated sample, conditioning class) pairs with
  // classes drawn from phi, then replaces w with the E-net's predictions on
  // the real data.
  EStepStats e_step();

  // Supervised fine-tuning on the labeled subset: checks the labeled error
  // before every pass and stops as soon as it reaches epsilon_stop (or at
  // fine_tune_max_passes). Refreshes w afterwards.
  FineTuneStats fine_tune(const std::vector<int>& labeled_indices);

  // Recomputes w = E(x_real) from the current E-net.
  void refresh_assignment();

 private:
  void rebuild_enet();

  Dataset data_;
  EmConfig cfg_;
  ThetaState state_;
  Tensor w_;
  Rmsprop opt_g_, opt_d_, opt_e_;
  Rng rng_noise_, rng_class_uniform_, rng_class_prior_, rng_shuffle_, rng_enet_init_,
      rng_enet_jitter_;
};

struct GanEmResult {
  ThetaState state;
  Tensor w;  // final soft assignment, w = E(x_real)
  std::vector<MetricsRow> trace;
};

// Full EM loop: w starts uniform; each iteration runs m_step then e_step
// and, when labeled_indices is nonempty, supervised fine-tuning with the
// epsilon stop rule. The trace holds one row per iteration.
GanEmResult run_gan_em(const Dataset& data, const EmConfig& cfg,
                       const std::vector<int>& labeled_indices = {});

}  // namespace ganem
