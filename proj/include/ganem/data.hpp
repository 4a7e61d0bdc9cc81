#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganem/tensor.hpp"

namespace ganem {

struct Dataset {
  Tensor x;                 // [N x d]
  std::vector<int> labels;  // ground truth; empty when unlabeled
  std::string name;
  double range_lo = 0.0;
  double range_hi = 1.0;
  std::uint64_t seed = 0;

  int n() const { return x.rows(); }
  int dim() const { return x.cols(); }
  bool has_labels() const { return !labels.empty(); }
  int num_classes() const;  // max label + 1; 0 when unlabeled
};

// Throws when the dataset violates its own contract (values outside the
// declared range, label count/range problems).
void validate_dataset(const Dataset& ds);

// Synthetic mixtures with ground-truth labels, deterministic per seed.
//   gaussian-grid     tight spherical blobs on a grid in [-1,1]^2
//   two-rings         K concentric rings (radially separable, not ellipsoidal)
//   pinwheel          K interleaved spiral arms
//   bernoulli-pixels  near-binary pixels in 4-pixel blocks; classes are
//                     block patterns (pairs, odd counts, all-or-nothing)
//                     sharing every per-pixel mean, so centroid and
//                     per-dimension Gaussian models see identical low-order
//                     moments while the corner sets stay small and generable
// Requires N >= 10*K.
Dataset synth_mixture(const std::string& kind, int k, int n, std::uint64_t seed);

std::vector<std::string> synth_kinds();

struct IdxOptions {
  int downsample = 1;             // mean-pool factor (1 = none); must divide both sides
  std::vector<int> keep_classes;  // empty = all; otherwise filter and relabel 0..K-1
  int per_class_cap = 0;          // 0 = unlimited; otherwise first `cap` per kept class
};

// Parses big-endian IDX image/label pairs (magic 0x803 / 0x801), scales
// pixels to [0,1], optionally mean-pools and class-filters.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const IdxOptions& opts = {});

// Class-balanced labeled subset: floor(m/K) per class, remainder filled by
// a seeded draw from the rest. Deterministic per seed.
std::vector<int> sample_labeled_subset(const Dataset& ds, int m, std::uint64_t seed);

// Versioned binary dataset cache.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace ganem
