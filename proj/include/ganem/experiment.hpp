#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ganem/data.hpp"
#include "ganem/emcore.hpp"

namespace ganem {

inline constexpr const char* kGanemVersion = "0.1.0";

// What a single process invocation does.
enum class RunMode {
  Cluster,         // unsupervised GAN-EM
  Semisup,         // GAN-EM with a labeled subset and the epsilon stop rule
  Dimreduce,       // unsupervised GAN-EM with a bottleneck; exports embeddings
  BaselineGmm,     // diagonal Gaussian mixture EM
  BaselineKmeans,  // Lloyd's algorithm
  VerifyTheory,    // random-instance checks of the discrete game theory
};

std::string to_string(RunMode mode);
RunMode run_mode_from_name(const std::string& name);

// Where the data comes from. `kind` is a synth_kinds() entry, "idx" for an
// IDX image/label pair, or "file" for a dataset saved by save_dataset.
struct DatasetSpec {
  std::string kind = "two-rings";
  int num_classes = 2;        // synthetic kinds only
  int n = 2000;               // synthetic kinds only
  std::uint64_t seed = 42;    // synthetic kinds only
  std::string images;         // idx only
  std::string labels;         // idx only
  int downsample = 1;         // idx only
  std::vector<int> keep_classes;  // idx only; empty = all
  int per_class_cap = 0;          // idx only; 0 = unlimited
  std::string path;               // file only
};

// Compact "key=value,key=value" form used on the command line, e.g.
//   kind=two-rings,k=2,n=2000,seed=42
//   kind=idx,images=im.idx,labels=lb.idx,downsample=2
//   kind=file,path=cached.bin
// Unknown keys are hard errors.
DatasetSpec dataset_spec_from_string(const std::string& compact);

Dataset materialize(const DatasetSpec& spec);

struct ExperimentConfig {
  RunMode mode = RunMode::Cluster;
  DatasetSpec dataset;
  EmConfig em;                // em.seed mirrors the root seed
  int labels_per_class = 0;   // semisup: must be >= 1
  int verify_trials = 20;     // verify-theory
  std::string output_dir = "out";
  std::string config_path;    // provenance for the manifest
};

// Parses and validates a JSON config file. Unknown keys anywhere in the
// tree are hard errors naming the key (and its line when locatable);
// mode-required fields are enforced here.
ExperimentConfig load_experiment_config(const std::string& path);

// Applies the GANEM_OUTPUT_ROOT environment variable: a relative output
// directory is rerooted under it; absolute paths and an unset variable
// pass through unchanged.
std::string resolve_output_dir(const std::string& dir);

// Executes one experiment, writing artifacts under the resolved output
// directory: metrics.csv, final_assignments.csv, checkpoint.json +
// checkpoint_params.bin (GAN-EM modes), embeddings.csv (dimreduce) and
// manifest.json (always; it records the resolved config, seed, version and
// outcome). Returns a process exit status; on mid-run failure the manifest
// carries the error text and the partial artifacts are left in place.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// Loads a checkpoint written by run_experiment, rebuilds the nets, scores
// the dataset with w = E(x), prints the scores and writes scores.json next
// to the checkpoint. `dataset` accepts the compact spec form.
int evaluate_checkpoint(const std::string& checkpoint_path, const std::string& dataset,
                        std::ostream& out);

// Random-instance verification: closed-form optimal discriminator vs brute
// force, the weighted value identity for constant weights, and prior-update
// dominance over random simplex probes. Prints a report; returns 0 iff
// every residual is within bounds.
int verify_theory(int trials, std::ostream& out);

// Human-readable list of built-in dataset kinds and loader options.
std::string list_datasets();

}  // namespace ganem
