#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ganem/rng.hpp"

namespace ganem {

// Row-major extents. All extents are positive.
using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::int64_t shape_size(const Shape& shape);

class Graph;

// Dense double-precision value array. A Tensor is detached by default;
// operations recorded on a Graph return attached handles (node() >= 0)
// that share storage with the graph node. Detached tensors are immutable
// from the graph's point of view and safe to share across threads.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool empty() const { return values_ == nullptr; }
  const Shape& shape() const { return shape_; }
  std::int64_t size() const;

  // 2-D helpers; throw unless the tensor is rank 2.
  int rows() const;
  int cols() const;

  std::span<const double> values() const;
  std::span<double> values_mut();

  double operator()(int i) const { return (*values_)[i]; }
  double operator()(int i, int j) const;
  double scalar_value() const;

  // Deep value copy with no graph handle.
  Tensor detached() const;

  bool attached() const { return node_ >= 0; }
  int node() const { return node_; }

 private:
  friend class Graph;
  Shape shape_;
  std::shared_ptr<std::vector<double>> values_;
  int node_ = -1;
  const Graph* graph_ = nullptr;
};

// Reverse-mode tape. Each recorded operation stores its operand node ids
// and a local-gradient rule; one backward pass from a scalar loss populates
// a gradient for every reachable leaf. The tape is rebuilt per minibatch.
// Construction and backward are single-threaded.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Records an input node. The returned handle shares storage with `t`.
  // Leaves with requires_grad=false never receive gradients and backward
  // does not traverse into subgraphs that only feed such leaves.
  Tensor leaf(const Tensor& t, bool requires_grad = true);
  Tensor constant(const Tensor& t) { return leaf(t, false); }

  Tensor matmul(const Tensor& a, const Tensor& b);
  // a [m x k] times b^T where b is [n x k]; avoids materializing transposes.
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  // Elementwise; also accepts b of shape [d] broadcast over the rows of a [n x d].
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double k);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  // Inverse sigmoid; inputs must lie strictly inside (0, 1).
  Tensor logit(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor leaky_relu(const Tensor& a, double slope);
  // Softmax along the last axis; rows sum to 1 within 1e-12.
  Tensor softmax(const Tensor& a);
  // Saturating clamp; gradient passes through inside [lo, hi], zero outside.
  Tensor clamp(const Tensor& a, double lo, double hi);
  Tensor concat(const Tensor& a, const Tensor& b, int axis);
  Tensor slice(const Tensor& a, int axis, int start, int len);
  Tensor reshape(const Tensor& a, Shape shape);

  std::size_t num_nodes() const { return nodes_.size(); }

  // Reverse pass from a scalar loss recorded on this graph.
  void backward(const Tensor& loss);

  bool backward_done() const { return backward_done_; }

  // Gradient of the loss w.r.t. a node recorded on this graph. Zero for
  // nodes not on any path to the loss. Only valid after backward().
  Tensor grad(const Tensor& t) const;
  std::span<const double> grad_values(const Tensor& t) const;

 private:
  struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    // Local gradient rule: accumulates into operand grads given this
    // node's grad. Null for leaves.
    std::function<void(Graph&, int)> backprop;
    std::vector<int> operands;
    bool needs_grad = false;
    const char* op = "leaf";
  };

  int record(Node node);
  Tensor wrap(int id) const;
  // Returns the node id for an operand, recording detached tensors as
  // constant leaves on the fly.
  int operand_id(const Tensor& t, const char* op);
  std::vector<double>& grad_buf(int id);

  const std::vector<double>& node_values(int id) const { return *nodes_[id].values; }

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_done_ = false;
};

// Parameter initialization. Deterministic for a fixed seed.
struct Init {
  enum class Kind { Uniform, ScaledNormal } kind = Kind::ScaledNormal;
  double lo = 0.0, hi = 0.0;  // Uniform bounds (hi >= lo)
  int fan_in = 0;             // ScaledNormal: variance 1/fan_in

  static Init uniform(double lo, double hi) { return {Kind::Uniform, lo, hi, 0}; }
  static Init scaled_normal(int fan_in) { return {Kind::ScaledNormal, 0, 0, fan_in}; }
};

Tensor init_params(const Shape& shape, const Init& scheme, Rng& rng);
Tensor init_params(const Shape& shape, const Init& scheme, std::uint64_t seed);

}  // namespace ganem
