#include "ganem/emcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "ganem/eval.hpp"

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kProbEps = 1e-12;
constexpr double kLogitCap = 30.0;
constexpr double kLogitFloor = -1e18;  // exp underflows long before this

// Rows of `t` selected by `idx`, as a detached tensor.
Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
  const int d = t.cols();
  std::vector<double> out(idx.size() * static_cast<std::size_t>(d));
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < d; ++j) out[r * d + j] = t(idx[r], j);
  return Tensor({static_cast<int>(idx.size()), d}, std::move(out));
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  const int d = a.cols();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((a.rows() + b.rows())) * d);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return Tensor({a.rows() + b.rows(), d}, std::move(out));
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Assignments and the prior

void validate_soft_assignment(const Tensor& w, int k) {
  if (w.shape().size() != 2 || w.cols() != k)
    fail("soft assignment: expected [N x " + std::to_string(k) + "], got " + shape_str(w.shape()));
  if (w.rows() == 0) fail("soft assignment: no rows");
  for (int i = 0; i < w.rows(); ++i) {
    double sum = 0;
    for (int j = 0; j < k; ++j) {
      const double v = w(i, j);
      if (!(v >= 0.0 && v <= 1.0))
        fail("soft assignment: entry (" + std::to_string(i) + "," + std::to_string(j) +
             ") = " + format_value(v) + " outside [0,1]");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      fail("soft assignment: row " + std::to_string(i) + " sums to " + format_value(sum));
  }
}

void validate_prior(const std::vector<double>& phi) {
  if (phi.empty()) fail("prior: empty");
  double sum = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (!(phi[i] >= 0.0))
      fail("prior: entry " + std::to_string(i) + " = " + format_value(phi[i]) + " is negative");
    sum += phi[i];
  }
  if (std::fabs(sum - 1.0) > 1e-12) fail("prior: sums to " + format_value(sum));
}

std::vector<double> update_prior(const Tensor& w) {
  if (w.shape().size() != 2 || w.rows() == 0) fail("update_prior: need a nonempty [N x K] matrix");
  const int k = w.cols();
  validate_soft_assignment(w, k);
  const int n = w.rows();
  std::vector<double> phi(k, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) phi[j] += w(i, j);
  double total = 0;
  for (double v : phi) total += v;
  for (double& v : phi) v /= total;  // soft counts over N, exact up to the row sums
  return phi;
}

// ---------------------------------------------------------------------------
// Configuration

void EmConfig::validate() const {
  if (num_clusters < 1) fail("config: num_clusters must be positive");
  if (em_iters < 0) fail("config: em_iters must be nonnegative");
  if (m_epochs < 0) fail("config: m_epochs must be nonnegative");
  if (e_updates < 0) fail("config: e_updates must be nonnegative (0 = auto)");
  if (m_batch < 1) fail("config: m_batch must be positive");
  if (e_batch < 1) fail("config: e_batch must be positive");
  if (!(lr_g > 0) || !(lr_d > 0) || !(lr_e > 0)) fail("config: learning rates must be positive");
  if (!(rmsprop_decay >= 0 && rmsprop_decay < 1)) fail("config: rmsprop_decay must be in [0,1)");
  if (!(epsilon_stop > 0 && epsilon_stop < 1)) fail("config: epsilon_stop must be in (0,1)");
  if (!(clip_c > 0)) fail("config: clip_c must be positive");
  if (e_input_noise < 0) fail("config: e_input_noise must be non-negative");
  if (!(extra_unit_weight >= 0)) fail("config: extra_unit_weight must be nonnegative");
  if (noise_dim < 1) fail("config: noise_dim must be positive");
  for (const auto* widths : {&gen_hidden, &disc_hidden, &enet_hidden})
    for (int wdt : *widths)
      if (wdt < 1) fail("config: hidden layer widths must be positive");
  if (bottleneck < 0) fail("config: bottleneck must be nonnegative");
  if (fine_tune_max_passes < 1) fail("config: fine_tune_max_passes must be positive");
}

int default_e_updates(int n_samples, int e_batch) {
  if (n_samples < 1 || e_batch < 1) fail("default_e_updates: counts must be positive");
  const int full_pass = (n_samples + e_batch - 1) / e_batch;
  const int scaled = static_cast<int>(std::lround(1000.0 * n_samples / 50000.0));
  return std::max({full_pass, scaled, 1});
}

// ---------------------------------------------------------------------------
// Losses

Tensor select_class_columns(Graph& g, const Tensor& values, const std::vector<int>& classes) {
  if (values.shape().size() != 2) fail("select_class_columns: need a matrix");
  if (static_cast<int>(classes.size()) != values.rows())
    fail("select_class_columns: batch size mismatch");
  const int cols = values.cols();
  Tensor mask = onehot_rows(classes, cols);
  Tensor ones = Tensor::full({cols, 1}, 1.0);
  return g.matmul(g.mul(values, g.constant(mask)), g.constant(ones));
}

Tensor generator_loss(Graph& g, const Tensor& class_logits) {
  if (class_logits.size() == 0) fail("generator_loss: empty batch");
  Tensor capped = g.clamp(class_logits, kLogitFloor, kLogitCap);
  return g.scale(g.mean(g.exp(capped)), -0.5);
}

Tensor discriminator_loss(Graph& g, const Tensor& real_probs, const Tensor& w,
                          const Tensor& fake_probs) {
  if (real_probs.shape().size() != 2 || fake_probs.shape().size() != 2 ||
      w.shape().size() != 2)
    fail("discriminator_loss: need matrices");
  const int k = w.cols();
  if (real_probs.cols() != k || fake_probs.cols() != k)
    fail("discriminator_loss: class-head count mismatch (" + std::to_string(real_probs.cols()) +
         " real vs " + std::to_string(k) + " weight columns)");
  if (real_probs.rows() != w.rows()) fail("discriminator_loss: batch size mismatch");
  if (real_probs.rows() == 0 || fake_probs.rows() == 0) fail("discriminator_loss: empty batch");
  for (int i = 0; i < w.rows(); ++i) {
    double sum = 0;
    for (int j = 0; j < k; ++j) {
      const double v = w(i, j);
      if (!(v >= -1e-9 && v <= 1 + 1e-9))
        fail("discriminator_loss: weight (" + std::to_string(i) + "," + std::to_string(j) +
             ") outside [0,1]");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
      fail("discriminator_loss: weight row " + std::to_string(i) + " sums to " +
           format_value(sum));
  }

  const double n_real = real_probs.rows();
  const double n_fake = fake_probs.rows();
  Tensor real_log = g.log(g.clamp(real_probs, kProbEps, 1.0 - kProbEps));
  Tensor real_term = g.scale(g.sum(g.mul(real_log, g.constant(w))), 1.0 / n_real);
  Tensor flipped = g.sub(g.constant(Tensor::full(fake_probs.shape(), 1.0)), fake_probs);
  Tensor fake_term = g.scale(g.sum(g.log(g.clamp(flipped, kProbEps, 1.0 - kProbEps))), 1.0 / n_fake);
  return g.scale(g.add(real_term, fake_term), -1.0);
}

Tensor real_fake_bce(Graph& g, const Tensor& real_probs, const Tensor& fake_probs) {
  if (real_probs.size() == 0 || fake_probs.size() == 0) fail("real_fake_bce: empty batch");
  Tensor real_term = g.mean(g.log(g.clamp(real_probs, kProbEps, 1.0 - kProbEps)));
  Tensor flipped = g.sub(g.constant(Tensor::full(fake_probs.shape(), 1.0)), fake_probs);
  Tensor fake_term = g.mean(g.log(g.clamp(flipped, kProbEps, 1.0 - kProbEps)));
  return g.scale(g.add(real_term, fake_term), -1.0);
}

Tensor enet_loss(Graph& g, const Tensor& predictions, const std::vector<int>& classes) {
  if (predictions.shape().size() != 2) fail("enet_loss: need [n x K] predictions");
  if (predictions.rows() == 0) fail("enet_loss: empty batch");
  if (static_cast<int>(classes.size()) != predictions.rows())
    fail("enet_loss: batch size mismatch");
  const int n = predictions.rows();
  Tensor mask = onehot_rows(classes, predictions.cols());
  Tensor picked = g.mul(g.log(g.clamp(predictions, kProbEps, 1.0)), g.constant(mask));
  return g.scale(g.sum(picked), -1.0 / n);
}

// ---------------------------------------------------------------------------
// Class samplers

std::vector<int> sample_classes_uniform(Rng& rng, int n, int k) {
  if (n < 1) fail("sample_classes_uniform: batch must be positive");
  if (k < 1) fail("sample_classes_uniform: K must be positive");
  std::vector<int> out(n);
  for (int& c : out) c = rng.uniform_int(k);
  return out;
}

std::vector<int> sample_classes_prior(Rng& rng, int n, const std::vector<double>& phi) {
  if (n < 1) fail("sample_classes_prior: batch must be positive");
  validate_prior(phi);
  std::vector<int> out(n);
  for (int& c : out) c = rng.categorical(phi);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV

std::string metrics_csv_header(int k, bool labeled) {
  std::ostringstream out;
  out << "iteration,loss_g,loss_d,loss_e";
  for (int j = 0; j < k; ++j) out << ",phi_" << j;
  out << ",clustering_error";
  if (labeled) out << ",labeled_error";
  return out.str();
}

std::string metrics_csv_row(const MetricsRow& row, int k, bool labeled) {
  if (static_cast<int>(row.phi.size()) != k) fail("metrics_csv_row: phi size mismatch");
  std::ostringstream out;
  out << row.iteration << ',' << format_value(row.g_loss) << ',' << format_value(row.d_loss)
      << ',' << format_value(row.e_loss);
  for (double v : row.phi) out << ',' << format_value(v);
  out << ',' << format_value(row.clustering_err);
  if (labeled) out << ',' << format_value(row.labeled_err);
  return out.str();
}

// ---------------------------------------------------------------------------
// Trainer

GanEmTrainer::GanEmTrainer(Dataset data, EmConfig cfg)
    : data_(std::move(data)),
      cfg_(std::move(cfg)),
      opt_g_(cfg_.lr_g, cfg_.rmsprop_decay),
      opt_d_(cfg_.lr_d, cfg_.rmsprop_decay),
      opt_e_(cfg_.lr_e, cfg_.rmsprop_decay),
      rng_noise_(Rng(cfg_.seed).substream("noise")),
      rng_class_uniform_(Rng(cfg_.seed).substream("classes-uniform")),
      rng_class_prior_(Rng(cfg_.seed).substream("classes-prior")),
      rng_shuffle_(Rng(cfg_.seed).substream("shuffle")),
      rng_enet_init_(Rng(cfg_.seed).substream("enet-init")),
      rng_enet_jitter_(Rng(cfg_.seed).substream("enet-input-jitter")) {
  cfg_.validate();
  validate_dataset(data_);
  if (data_.n() < 1) fail("trainer: dataset is empty");

  const int d = data_.dim();
  const int k = cfg_.num_clusters;
  const Activation out_act = data_.range_lo < 0 ? Activation::Tanh : Activation::Sigmoid;
  Rng init = Rng(cfg_.seed).substream("init");
  state_.gen = make_generator(cfg_.noise_dim, k, d, cfg_.gen_hidden, out_act, init);
  state_.disc = make_discriminator(d, k, cfg_.disc_hidden, init);
  state_.enet = make_enet(d, k, cfg_.enet_hidden, cfg_.bottleneck, init);
  state_.phi.assign(k, 1.0 / k);
  w_ = Tensor::full({data_.n(), k}, 1.0 / k);
}

void GanEmTrainer::rebuild_enet() {
  state_.enet = make_enet(data_.dim(), cfg_.num_clusters, cfg_.enet_hidden, cfg_.bottleneck,
                          rng_enet_init_);
  opt_e_ = Rmsprop(cfg_.lr_e, cfg_.rmsprop_decay);
}

MStepStats GanEmTrainer::m_step() {
  state_.phi = update_prior(w_);

  MStepStats stats;
  const int n = data_.n();
  const int k = cfg_.num_clusters;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg_.m_epochs; ++epoch) {
    rng_shuffle_.shuffle(order);
    for (int start = 0; start < n; start += cfg_.m_batch) {
      const int b = std::min(cfg_.m_batch, n - start);
      const std::vector<int> batch(order.begin() + start, order.begin() + start + b);

      {  // generator update (discriminator held fixed)
        Graph g;
        ParamLeaves leaves;
        const auto classes = sample_classes_uniform(rng_class_uniform_, b, k);
        const Tensor z = sample_noise(rng_noise_, b, cfg_.noise_dim, cfg_.noise_kind);
        Tensor fake = generate_batch(g, state_.gen, z, classes, /*trainable=*/true, &leaves);
        DiscOutput disc_out = discriminate_batch(g, state_.disc, fake);
        Tensor loss = generator_loss(g, select_class_columns(g, disc_out.logits, classes));
        g.backward(loss);
        opt_g_.step(state_.gen.net, g, leaves);
        clip_weights(state_.gen.net, cfg_.clip_c);
        stats.g_loss += loss.scalar_value();
        ++stats.g_updates;
      }

      {  // discriminator update (generator held fixed)
        Graph gen_graph;
        const auto classes = sample_classes_uniform(rng_class_uniform_, b, k);
        const Tensor z = sample_noise(rng_noise_, b, cfg_.noise_dim, cfg_.noise_kind);
        const Tensor fake =
            generate_batch(gen_graph, state_.gen, z, classes).detached();
        const Tensor real = gather_rows(data_.x, batch);
        const Tensor w_batch = gather_rows(w_, batch);

        Graph g;
        ParamLeaves leaves;
        DiscOutput out = discriminate_batch(g, state_.disc, stack_rows(real, fake),
                                            /*trainable=*/true, &leaves);
        Tensor real_probs = g.slice(out.probs, 0, 0, b);
        Tensor fake_probs = g.slice(out.probs, 0, b, b);
        Tensor core = discriminator_loss(g, g.slice(real_probs, 1, 0, k), w_batch,
                                         g.slice(fake_probs, 1, 0, k));
        Tensor total = core;
        if (cfg_.extra_unit_weight > 0) {
          Tensor extra = real_fake_bce(g, g.slice(real_probs, 1, k, 1), g.slice(fake_probs, 1, k, 1));
          total = g.add(core, g.scale(extra, cfg_.extra_unit_weight));
        }
        g.backward(total);
        opt_d_.step(state_.disc.net, g, leaves);
        stats.d_loss += core.scalar_value();
        ++stats.d_updates;
      }
    }
  }
  if (stats.g_updates > 0) stats.g_loss /= stats.g_updates;
  if (stats.d_updates > 0) stats.d_loss /= stats.d_updates;
  return stats;
}

EStepStats GanEmTrainer::e_step() {
  if (!cfg_.warm_start_enet) rebuild_enet();

  EStepStats stats;
  const int q = cfg_.e_updates > 0 ? cfg_.e_updates : default_e_updates(data_.n(), cfg_.e_batch);
  for (int u = 0; u < q; ++u) {
    const auto classes = sample_classes_prior(rng_class_prior_, cfg_.e_batch, state_.phi);
    const Tensor z = sample_noise(rng_noise_, cfg_.e_batch, cfg_.noise_dim, cfg_.noise_kind);
    Graph gen_graph;
    Tensor fake = generate_batch(gen_graph, state_.gen, z, classes).detached();
    if (cfg_.e_input_noise > 0) {
      for (double& v : fake.values_mut())
        v = std::clamp(v + rng_enet_jitter_.normal(0, cfg_.e_input_noise),
                       data_.range_lo, data_.range_hi);
    }

    Graph g;
    ParamLeaves leaves;
    Tensor out = e_predict_batch(g, state_.enet, fake, /*trainable=*/true, &leaves);
    Tensor loss = enet_loss(g, out, classes);
    g.backward(loss);
    opt_e_.step(state_.enet.net, g, leaves);
    stats.e_loss += loss.scalar_value();
    ++stats.e_updates;
  }
  if (stats.e_updates > 0) stats.e_loss /= stats.e_updates;
  refresh_assignment();
  return stats;
}

FineTuneStats GanEmTrainer::fine_tune(const std::vector<int>& labeled_indices) {
  if (labeled_indices.empty()) fail("fine_tune: labeled index set is empty");
  if (!data_.has_labels()) fail("fine_tune: dataset carries no labels");
  const int k = cfg_.num_clusters;
  for (int idx : labeled_indices) {
    if (idx < 0 || idx >= data_.n()) fail("fine_tune: index " + std::to_string(idx) + " out of range");
    if (data_.labels[idx] < 0 || data_.labels[idx] >= k)
      fail("fine_tune: label " + std::to_string(data_.labels[idx]) + " outside [0," +
           std::to_string(k) + ")");
  }

  const Tensor xs = gather_rows(data_.x, labeled_indices);
  std::vector<int> ys(labeled_indices.size());
  for (std::size_t i = 0; i < labeled_indices.size(); ++i) ys[i] = data_.labels[labeled_indices[i]];

  const auto labeled_error = [&]() {
    Graph g;
    return classification_error(hard_labels(e_predict_batch(g, state_.enet, xs)), ys);
  };

  FineTuneStats stats;
  stats.labeled_error = labeled_error();
  const int m = static_cast<int>(labeled_indices.size());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  while (stats.labeled_error > cfg_.epsilon_stop && stats.passes < cfg_.fine_tune_max_passes) {
    rng_shuffle_.shuffle(order);
    for (int start = 0; start < m; start += cfg_.e_batch) {
      const int b = std::min(cfg_.e_batch, m - start);
      const std::vector<int> batch(order.begin() + start, order.begin() + start + b);
      std::vector<int> yb(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) yb[i] = ys[batch[i]];

      Graph g;
      ParamLeaves leaves;
      Tensor out = e_predict_batch(g, state_.enet, gather_rows(xs, batch), /*trainable=*/true,
                                   &leaves);
      Tensor loss = enet_loss(g, out, yb);
      g.backward(loss);
      opt_e_.step(state_.enet.net, g, leaves);
    }
    ++stats.passes;
    stats.labeled_error = labeled_error();
  }
  stats.reached_epsilon = stats.labeled_error <= cfg_.epsilon_stop;
  refresh_assignment();
  return stats;
}

void GanEmTrainer::refresh_assignment() {
  Graph g;
  Tensor w = e_predict_batch(g, state_.enet, data_.x).detached();
  validate_soft_assignment(w, cfg_.num_clusters);
  w_ = std::move(w);
}

// ---------------------------------------------------------------------------
// Full loop

GanEmResult run_gan_em(const Dataset& data, const EmConfig& cfg,
                       const std::vector<int>& labeled_indices) {
  cfg.validate();
  GanEmTrainer trainer(data, cfg);
  const bool semisup = !labeled_indices.empty();
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

  GanEmResult result;
  for (int iter = 1; iter <= cfg.em_iters; ++iter) {
    const MStepStats ms = trainer.m_step();
    const EStepStats es = trainer.e_step();

    MetricsRow row;
    row.iteration = iter;
    row.g_loss = ms.g_loss;
    row.d_loss = ms.d_loss;
    row.e_loss = es.e_loss;
    row.labeled_err = semisup ? trainer.fine_tune(labeled_indices).labeled_error : kNan;
    row.phi = trainer.state().phi;
    row.clustering_err = kNan;
    if (data.has_labels()) {
      int label_span = cfg.num_clusters;
      for (int label : data.labels) label_span = std::max(label_span, label + 1);
      row.clustering_err =
          clustering_error(hard_labels(trainer.soft_assignment()), data.labels, label_span).error;
    }
    result.trace.push_back(std::move(row));
  }
  result.w = trainer.soft_assignment();
  result.state = trainer.state();
  return result;
}

}  // namespace ganem
