#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ganem/data.hpp"
#include "ganem/models.hpp"
#include "ganem/tensor.hpp"

namespace ganem {

// Row argmax of an [N x K] soft-assignment matrix; ties go to the lowest
// class index.
std::vector<int> hard_labels(const Tensor& w);

// counts[p][t] = number of samples predicted p with true label t.
std::vector<std::vector<long long>> confusion_table(const std::vector<int>& pred,
                                                    const std::vector<int>& truth, int k);

// Maximum-score perfect matching on a square score matrix (Hungarian
// method, O(k^3)). `mapping[row] = column`. Returns the total score.
long long max_assignment(const std::vector<std::vector<long long>>& score,
                         std::vector<int>* mapping = nullptr);

// Reference implementation: exhaustive search over all k! column
// permutations. Intended for cross-checking max_assignment at small k.
long long max_assignment_exhaustive(const std::vector<std::vector<long long>>& score,
                                    std::vector<int>* mapping = nullptr);

struct ClusteringScore {
  double error = 0.0;            // 1 - best matched fraction
  std::vector<int> mapping;      // predicted cluster -> matched true label
  std::vector<std::vector<long long>> confusion;
};

// 1 minus the best agreement fraction over one-to-one cluster-to-label
// mappings, via optimal assignment on the confusion table.
ClusteringScore clustering_error(const std::vector<int>& pred, const std::vector<int>& truth,
                                 int k);

// Plain mismatch fraction; classes are already identified (supervised).
double classification_error(const std::vector<int>& pred, const std::vector<int>& truth);

struct EmbeddingTable {
  Tensor embeddings;           // [N x k]
  std::vector<int> truth;      // -1 when unavailable
  std::vector<int> predicted;  // argmax of e_predict
};

// Bottleneck activations plus labels for every sample, deterministic.
EmbeddingTable export_embeddings(const ENet& enet, const Dataset& ds);

// CSV with header: emb_0..emb_{k-1}, true_label, predicted_label.
void write_embeddings_csv(const std::string& path, const EmbeddingTable& table);

}  // namespace ganem
