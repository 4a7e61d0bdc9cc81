#include "ganem/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ganem/nn.hpp"
#include "ganem/rng.hpp"

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }
[[noreturn]] void io_fail(const std::string& msg) { throw std::runtime_error(msg); }

double clamp_range(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

int Dataset::num_classes() const {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  return k;
}

void validate_dataset(const Dataset& ds) {
  if (ds.x.empty() || ds.x.shape().size() != 2) fail("dataset: x must be [N x d]");
  for (auto v : ds.x.values())
    if (v < ds.range_lo || v > ds.range_hi) {
      std::ostringstream msg;
      msg << "dataset '" << ds.name << "': value " << v << " outside declared range ["
          << ds.range_lo << ", " << ds.range_hi << "]";
      fail(msg.str());
    }
  if (ds.has_labels()) {
    if (static_cast<int>(ds.labels.size()) != ds.n())
      fail("dataset '" + ds.name + "': label count does not match sample count");
    for (int l : ds.labels)
      if (l < 0) fail("dataset '" + ds.name + "': negative label");
  }
}

namespace {

Dataset gaussian_grid(int k, int n, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("gaussian-grid");
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
  const double sigma = 0.08;
  std::vector<std::pair<double, double>> centers;
  for (int i = 0; i < k; ++i) {
    const int r = i / side, c = i % side;
    const double step = side > 1 ? 1.2 / (side - 1) : 0.0;
    centers.emplace_back(-0.6 + step * c, -0.6 + step * r);
  }
  std::vector<double> xs(static_cast<std::size_t>(n) * 2);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % k;  // deal classes evenly so every class has floor(n/k) or more samples
    labels[i] = c;
    xs[2 * static_cast<std::size_t>(i)] = clamp_range(centers[c].first + rng.normal(0, sigma), -1, 1);
    xs[2 * static_cast<std::size_t>(i) + 1] =
        clamp_range(centers[c].second + rng.normal(0, sigma), -1, 1);
  }
  Dataset ds;
  ds.x = Tensor({n, 2}, std::move(xs));
  ds.labels = std::move(labels);
  ds.range_lo = -1;
  ds.range_hi = 1;
  return ds;
}

Dataset two_rings(int k, int n, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("two-rings");
  const double r_min = 0.25, r_max = 0.85, sigma = 0.02;
  std::vector<double> xs(static_cast<std::size_t>(n) * 2);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % k;  // deal classes evenly so every class has floor(n/k) or more samples
    labels[i] = c;
    const double radius =
        (k > 1 ? r_min + (r_max - r_min) * c / (k - 1) : r_max) + rng.normal(0, sigma);
    const double theta = rng.uniform(0, 2 * std::numbers::pi);
    xs[2 * static_cast<std::size_t>(i)] = clamp_range(radius * std::cos(theta), -1, 1);
    xs[2 * static_cast<std::size_t>(i) + 1] = clamp_range(radius * std::sin(theta), -1, 1);
  }
  Dataset ds;
  ds.x = Tensor({n, 2}, std::move(xs));
  ds.labels = std::move(labels);
  ds.range_lo = -1;
  ds.range_hi = 1;
  return ds;
}

Dataset pinwheel(int k, int n, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("pinwheel");
  std::vector<double> xs(static_cast<std::size_t>(n) * 2);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % k;  // deal classes evenly so every class has floor(n/k) or more samples
    labels[i] = c;
    const double t = rng.uniform();
    const double radius = 0.2 + 0.65 * t;
    const double angle = 2 * std::numbers::pi * c / k + 3.0 * t + rng.normal(0, 0.06);
    xs[2 * static_cast<std::size_t>(i)] = clamp_range(radius * std::cos(angle), -1, 1);
    xs[2 * static_cast<std::size_t>(i) + 1] = clamp_range(radius * std::sin(angle), -1, 1);
  }
  Dataset ds;
  ds.x = Tensor({n, 2}, std::move(xs));
  ds.labels = std::move(labels);
  ds.range_lo = -1;
  ds.range_hi = 1;
  return ds;
}

// Near-binary pixels: the pixels form 4-pixel blocks and a sample switches
// whole blocks on, then 2% of pixels flip and a small truncated jitter pulls
// values slightly off 0/1. Classes are combinatorial patterns over the
// blocks chosen so that every class shares the same per-pixel mean (every
// block is on half the time in every class): for K=2, class 0 lights
// exactly 2 of the 4 blocks while class 1 lights all of them or none on a
// coin flip; for K=4 the patterns are adjacent pairs / opposite pairs /
// odd counts / all-or-nothing. Centroid and per-dimension Gaussian models see identical
// first and second moments everywhere and go blind, while each class still
// covers only a handful of distinct corners, few enough for a small
// conditional generator to reach them all. K=3 drops the adjacent/opposite
// distinction (counts 2 / 1-or-3 / 0-or-4); K>4 falls back to one class per
// on-count with dim = 4K pixels so counts stay distinct.
Dataset bernoulli_pixels(int k, int n, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("bernoulli-pixels");
  const int dim = std::max(16, 4 * k);
  const int blocks = dim / 4;
  constexpr double kFlip = 0.02;
  constexpr double kNoiseSd = 0.035;

  std::vector<double> xs(static_cast<std::size_t>(n) * dim);
  std::vector<int> labels(n);
  std::vector<int> order(static_cast<std::size_t>(blocks));
  std::vector<int> on_list;
  for (int i = 0; i < n; ++i) {
    const int c = i % k;  // deal classes evenly so every class has floor(n/k) or more samples
    on_list.clear();
    if (k <= 4) {
      // Pattern classes over 4 blocks, all with per-pixel mean 1/2.
      // K=2: {2 blocks} vs {1 or 3}; K=3 adds {0 or 4}; K=4 splits the
      // 2-block class into cyclically adjacent vs opposite pairs.
      int kind = c;
      if (k == 2) kind = (c == 0) ? 0 : 3;        // pairs vs all-or-nothing
      else if (k == 3) kind = (c == 0) ? 0 : c + 1;  // pairs, odd, extreme
      switch (kind) {
        case 0: {  // any 2 of 4 blocks (K<4), or adjacent pairs only (K=4)
          if (k == 4) {
            const int a = rng.uniform_int(4);
            on_list = {a, (a + 1) % 4};
          } else {
            const int a = rng.uniform_int(4);
            int b = rng.uniform_int(3);
            if (b >= a) ++b;
            on_list = {a, b};
          }
          break;
        }
        case 1: {  // opposite pairs
          const int a = rng.uniform_int(2);
          on_list = {a, a + 2};
          break;
        }
        case 2: {  // 1 or 3 blocks on a coin flip
          if (rng.uniform() < 0.5) {
            on_list = {rng.uniform_int(4)};
          } else {
            const int off = rng.uniform_int(4);
            for (int b = 0; b < 4; ++b)
              if (b != off) on_list.push_back(b);
          }
          break;
        }
        default: {  // all or nothing
          if (rng.uniform() < 0.5)
            for (int b = 0; b < 4; ++b) on_list.push_back(b);
          break;
        }
      }
    } else {
      // One class per on-count, random block placement.
      const int on_blocks = blocks - c;
      for (int j = 0; j < blocks; ++j) order[static_cast<std::size_t>(j)] = j;
      rng.shuffle(order);
      on_list.assign(order.begin(), order.begin() + on_blocks);
    }
    labels[i] = c;
    std::vector<int> bits(static_cast<std::size_t>(dim), 0);
    for (int b : on_list)
      for (int p = 0; p < 4; ++p) bits[static_cast<std::size_t>(4 * b + p)] = 1;
    for (int j = 0; j < dim; ++j) {
      int bit = bits[static_cast<std::size_t>(j)];
      if (rng.uniform() < kFlip) bit = 1 - bit;
      xs[static_cast<std::size_t>(i) * dim + j] =
          clamp_range(bit + rng.normal(0, kNoiseSd), 0, 1);
    }
  }
  Dataset ds;
  ds.x = Tensor({n, dim}, std::move(xs));
  ds.labels = std::move(labels);
  ds.range_lo = 0;
  ds.range_hi = 1;
  return ds;
}

}  // namespace

std::vector<std::string> synth_kinds() {
  return {"gaussian-grid", "two-rings", "pinwheel", "bernoulli-pixels"};
}

Dataset synth_mixture(const std::string& kind, int k, int n, std::uint64_t seed) {
  if (k <= 0) fail("synth_mixture: K must be positive");
  if (n < 10 * k) fail("synth_mixture: N must be at least 10*K");
  Dataset ds;
  if (kind == "gaussian-grid") ds = gaussian_grid(k, n, seed);
  else if (kind == "two-rings") ds = two_rings(k, n, seed);
  else if (kind == "pinwheel") ds = pinwheel(k, n, seed);
  else if (kind == "bernoulli-pixels") ds = bernoulli_pixels(k, n, seed);
  else fail("synth_mixture: unknown kind '" + kind + "'");
  ds.name = kind;
  ds.seed = seed;
  validate_dataset(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// IDX loading

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) io_fail(std::string("idx: truncated while reading ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const IdxOptions& opts) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) io_fail("idx: cannot open images file '" + images_path + "'");
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) io_fail("idx: cannot open labels file '" + labels_path + "'");

  const auto img_magic = read_be32(img, "image magic");
  if (img_magic != 0x00000803) {
    std::ostringstream msg;
    msg << "idx: bad image magic 0x" << std::hex << img_magic << " (expected 0x803)";
    io_fail(msg.str());
  }
  const auto count = read_be32(img, "image count");
  const auto rows = read_be32(img, "rows");
  const auto cols = read_be32(img, "cols");

  const auto lab_magic = read_be32(lab, "label magic");
  if (lab_magic != 0x00000801) {
    std::ostringstream msg;
    msg << "idx: bad label magic 0x" << std::hex << lab_magic << " (expected 0x801)";
    io_fail(msg.str());
  }
  const auto lab_count = read_be32(lab, "label count");
  if (lab_count != count) {
    std::ostringstream msg;
    msg << "idx: image count " << count << " does not match label count " << lab_count;
    io_fail(msg.str());
  }

  const int ds_factor = opts.downsample;
  if (ds_factor < 1) fail("idx: downsample factor must be >= 1");
  if (rows % ds_factor != 0 || cols % ds_factor != 0) {
    std::ostringstream msg;
    msg << "idx: downsample factor " << ds_factor << " does not divide " << rows << "x" << cols;
    fail(msg.str());
  }
  const int out_rows = static_cast<int>(rows) / ds_factor;
  const int out_cols = static_cast<int>(cols) / ds_factor;
  const int dim = out_rows * out_cols;

  // Class filter: map original label -> new label, -1 = dropped.
  std::vector<int> relabel(256, -1);
  if (opts.keep_classes.empty()) {
    for (int i = 0; i < 256; ++i) relabel[i] = i;
  } else {
    for (std::size_t i = 0; i < opts.keep_classes.size(); ++i) {
      const int c = opts.keep_classes[i];
      if (c < 0 || c > 255) fail("idx: keep_classes entry out of byte range");
      relabel[c] = static_cast<int>(i);
    }
  }

  std::vector<double> xs;
  std::vector<int> labels;
  std::vector<int> per_class_count(opts.keep_classes.empty() ? 256 : opts.keep_classes.size(), 0);
  std::vector<unsigned char> pix(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (!img) io_fail("idx: truncated image payload");
    char lab_byte;
    lab.read(&lab_byte, 1);
    if (!lab) io_fail("idx: truncated label payload");
    const int mapped = relabel[static_cast<unsigned char>(lab_byte)];
    if (mapped < 0) continue;
    if (opts.per_class_cap > 0 && per_class_count[mapped] >= opts.per_class_cap) continue;
    ++per_class_count[mapped];
    labels.push_back(mapped);
    for (int r = 0; r < out_rows; ++r)
      for (int c = 0; c < out_cols; ++c) {
        double acc = 0;
        for (int dr = 0; dr < ds_factor; ++dr)
          for (int dc = 0; dc < ds_factor; ++dc)
            acc += pix[static_cast<std::size_t>(r * ds_factor + dr) * cols + c * ds_factor + dc];
        xs.push_back(acc / (255.0 * ds_factor * ds_factor));
      }
  }
  if (labels.empty()) io_fail("idx: no samples survived the class filter");

  Dataset ds;
  ds.x = Tensor({static_cast<int>(labels.size()), dim}, std::move(xs));
  ds.labels = std::move(labels);
  ds.name = "idx";
  ds.range_lo = 0;
  ds.range_hi = 1;
  validate_dataset(ds);
  return ds;
}

std::vector<int> sample_labeled_subset(const Dataset& ds, int m, std::uint64_t seed) {
  if (!ds.has_labels()) fail("sample_labeled_subset: dataset has no ground truth");
  if (m <= 0 || m > ds.n()) fail("sample_labeled_subset: m out of range");
  const int k = ds.num_classes();
  const int per_class = m / k;

  std::vector<std::vector<int>> by_class(k);
  for (int i = 0; i < ds.n(); ++i) by_class[ds.labels[i]].push_back(i);
  for (int c = 0; c < k; ++c)
    if (static_cast<int>(by_class[c].size()) < per_class) {
      std::ostringstream msg;
      msg << "sample_labeled_subset: class " << c << " has only " << by_class[c].size()
          << " samples, need " << per_class;
      fail(msg.str());
    }

  Rng rng = Rng(seed).substream("labeled-subset");
  std::vector<int> chosen;
  std::vector<int> rest;
  for (int c = 0; c < k; ++c) {
    auto idx = by_class[c];
    rng.shuffle(idx);
    for (int j = 0; j < per_class; ++j) chosen.push_back(idx[j]);
    for (std::size_t j = per_class; j < idx.size(); ++j) rest.push_back(idx[j]);
  }
  const int remainder = m - per_class * k;
  if (remainder > 0) {
    rng.shuffle(rest);
    for (int j = 0; j < remainder; ++j) chosen.push_back(rest[j]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// ---------------------------------------------------------------------------
// Dataset cache

namespace {

constexpr char kCacheMagic[4] = {'G', 'E', 'M', 'D'};
constexpr std::uint32_t kCacheVersion = 1;

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) io_fail(std::string("dataset cache: truncated while reading ") + what);
  return v;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  validate_dataset(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail("dataset cache: cannot open '" + path + "' for writing");
  out.write(kCacheMagic, 4);
  write_pod(out, kCacheVersion);
  write_pod(out, static_cast<std::uint32_t>(ds.name.size()));
  out.write(ds.name.data(), static_cast<std::streamsize>(ds.name.size()));
  write_pod(out, ds.range_lo);
  write_pod(out, ds.range_hi);
  write_pod(out, ds.seed);
  write_pod(out, static_cast<std::uint32_t>(ds.labels.size()));
  for (int l : ds.labels) write_pod(out, static_cast<std::int32_t>(l));
  save_params(out, {{"x", &ds.x}});
  if (!out) io_fail("dataset cache: write failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail("dataset cache: cannot open '" + path + "' for reading");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0) io_fail("dataset cache: bad magic");
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kCacheVersion) io_fail("dataset cache: unsupported version");
  Dataset ds;
  const auto name_len = read_pod<std::uint32_t>(in, "name length");
  if (name_len > 4096) io_fail("dataset cache: implausible name length");
  ds.name.resize(name_len);
  in.read(ds.name.data(), name_len);
  if (!in) io_fail("dataset cache: truncated name");
  ds.range_lo = read_pod<double>(in, "range lo");
  ds.range_hi = read_pod<double>(in, "range hi");
  ds.seed = read_pod<std::uint64_t>(in, "seed");
  const auto label_count = read_pod<std::uint32_t>(in, "label count");
  ds.labels.resize(label_count);
  for (auto& l : ds.labels) l = read_pod<std::int32_t>(in, "label");
  auto tensors = load_params(in);
  if (tensors.size() != 1 || tensors[0].first != "x") io_fail("dataset cache: malformed payload");
  ds.x = std::move(tensors[0].second);
  validate_dataset(ds);
  return ds;
}

}  // namespace ganem
