#include "ganem/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_labels(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  if (pred.size() != truth.size())
    fail("clustering_error: prediction and truth lengths differ (" + std::to_string(pred.size()) +
         " vs " + std::to_string(truth.size()) + ")");
  if (pred.empty()) fail("clustering_error: empty label vectors");
  for (int v : pred)
    if (v < 0 || v >= k) fail("clustering_error: prediction " + std::to_string(v) + " out of [0, " +
                              std::to_string(k) + ")");
  for (int v : truth)
    if (v < 0 || v >= k) fail("clustering_error: truth label " + std::to_string(v) + " out of [0, " +
                              std::to_string(k) + ")");
}

}  // namespace

std::vector<int> hard_labels(const Tensor& w) {
  if (w.empty() || w.shape().size() != 2) fail("hard_labels: w must be [N x K]");
  const int n = w.rows(), k = w.cols();
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (w(i, j) > w(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

std::vector<std::vector<long long>> confusion_table(const std::vector<int>& pred,
                                                    const std::vector<int>& truth, int k) {
  check_labels(pred, truth, k);
  std::vector<std::vector<long long>> counts(k, std::vector<long long>(k, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++counts[pred[i]][truth[i]];
  return counts;
}

long long max_assignment(const std::vector<std::vector<long long>>& score,
                         std::vector<int>* mapping) {
  const int n = static_cast<int>(score.size());
  if (n == 0) fail("max_assignment: empty score matrix");
  for (const auto& row : score)
    if (static_cast<int>(row.size()) != n) fail("max_assignment: score matrix must be square");

  // Hungarian method with potentials on the negated scores (minimization).
  const long long kInf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<long long> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      long long delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = -score[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  long long total = 0;
  std::vector<int> map(n, -1);
  for (int j = 1; j <= n; ++j) {
    map[p[j] - 1] = j - 1;
    total += score[p[j] - 1][j - 1];
  }
  if (mapping) *mapping = std::move(map);
  return total;
}

long long max_assignment_exhaustive(const std::vector<std::vector<long long>>& score,
                                    std::vector<int>* mapping) {
  const int n = static_cast<int>(score.size());
  if (n == 0) fail("max_assignment_exhaustive: empty score matrix");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  long long best = std::numeric_limits<long long>::min();
  std::vector<int> best_perm = perm;
  do {
    long long total = 0;
    for (int i = 0; i < n; ++i) total += score[i][perm[i]];
    if (total > best) {
      best = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (mapping) *mapping = best_perm;
  return best;
}

ClusteringScore clustering_error(const std::vector<int>& pred, const std::vector<int>& truth,
                                 int k) {
  ClusteringScore out;
  out.confusion = confusion_table(pred, truth, k);
  const long long matched = max_assignment(out.confusion, &out.mapping);
  out.error = 1.0 - static_cast<double>(matched) / static_cast<double>(pred.size());
  return out;
}

double classification_error(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    fail("classification_error: prediction and truth lengths differ");
  if (pred.empty()) fail("classification_error: empty label vectors");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != truth[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

EmbeddingTable export_embeddings(const ENet& enet, const Dataset& ds) {
  if (enet.bottleneck_layer < 0) fail("export_embeddings: ENet has no bottleneck");
  EmbeddingTable table;
  Graph g;
  table.embeddings = e_embed_batch(g, enet, ds.x).detached();
  table.predicted = hard_labels(e_predict_batch(g, enet, ds.x));
  table.truth = ds.has_labels() ? ds.labels : std::vector<int>(ds.n(), -1);
  return table;
}

void write_embeddings_csv(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_embeddings_csv: cannot open '" + path + "'");
  const int n = table.embeddings.rows(), k = table.embeddings.cols();
  for (int j = 0; j < k; ++j) out << "emb_" << j << ",";
  out << "true_label,predicted_label\n";
  char buf[64];
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", table.embeddings(i, j));
      out << buf << ",";
    }
    out << table.truth[i] << "," << table.predicted[i] << "\n";
  }
  if (!out) throw std::runtime_error("write_embeddings_csv: write failed");
}

}  // namespace ganem
