#include "ganem/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ganem {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream msg;
  msg << op << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
  fail(msg.str());
}

[[noreturn]] void domain_error_at(const char* op, double value, std::int64_t index) {
  std::ostringstream msg;
  msg << op << ": domain violation, value " << value << " at flat index " << index;
  throw std::domain_error(msg.str());
}

void check_valid_shape(const Shape& shape, const char* where) {
  for (int e : shape) {
    if (e <= 0) {
      std::ostringstream msg;
      msg << where << ": degenerate shape " << shape_str(shape);
      fail(msg.str());
    }
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_valid_shape(shape_, "Tensor");
  if (shape_size(shape_) != static_cast<std::int64_t>(values.size())) {
    std::ostringstream msg;
    msg << "Tensor: shape " << shape_str(shape_) << " wants " << shape_size(shape_)
        << " values, got " << values.size();
    fail(msg.str());
  }
  values_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  check_valid_shape(shape, "Tensor::full");
  std::vector<double> v(static_cast<std::size_t>(shape_size(shape)), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::int64_t Tensor::size() const { return values_ ? static_cast<std::int64_t>(values_->size()) : 0; }

int Tensor::rows() const {
  if (shape_.size() != 2) fail("Tensor::rows: not a matrix, shape " + shape_str(shape_));
  return shape_[0];
}

int Tensor::cols() const {
  if (shape_.size() != 2) fail("Tensor::cols: not a matrix, shape " + shape_str(shape_));
  return shape_[1];
}

std::span<const double> Tensor::values() const {
  if (!values_) fail("Tensor::values: empty tensor");
  return {values_->data(), values_->size()};
}

std::span<double> Tensor::values_mut() {
  if (!values_) fail("Tensor::values_mut: empty tensor");
  return {values_->data(), values_->size()};
}

double Tensor::operator()(int i, int j) const { return (*values_)[static_cast<std::size_t>(i) * cols() + j]; }

double Tensor::scalar_value() const {
  if (size() != 1) fail("Tensor::scalar_value: tensor has " + std::to_string(size()) + " values");
  return (*values_)[0];
}

Tensor Tensor::detached() const {
  if (!values_) return Tensor();
  return Tensor(shape_, *values_);
}

// ---------------------------------------------------------------------------
// Graph

int Graph::record(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::wrap(int id) const {
  Tensor t;
  t.shape_ = nodes_[id].shape;
  t.values_ = nodes_[id].values;
  t.node_ = id;
  t.graph_ = this;
  return t;
}

Tensor Graph::leaf(const Tensor& t, bool requires_grad) {
  if (t.empty()) fail("Graph::leaf: empty tensor");
  if (t.attached()) {
    if (t.graph_ != this) fail("Graph::leaf: tensor belongs to another graph");
    return t;
  }
  Node node;
  node.shape = t.shape_;
  node.values = t.values_;
  node.needs_grad = requires_grad;
  return wrap(record(std::move(node)));
}

int Graph::operand_id(const Tensor& t, const char* op) {
  if (t.empty()) fail(std::string(op) + ": empty operand");
  if (t.attached()) {
    if (t.graph_ != this) fail(std::string(op) + ": operand belongs to another graph");
    return t.node_;
  }
  return leaf(t, false).node_;
}

std::vector<double>& Graph::grad_buf(int id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].values->size(), 0.0);
  return g;
}

namespace {

// Shared scaffolding for unary elementwise ops with grad = f'(x) given
// input and output values.
struct Elementwise {
  const char* op;
  double (*fwd)(double);
  // dinput += doutput * local(input, output)
  double (*local)(double x, double y);
};

}  // namespace

#define GANEM_UNARY_OP(METHOD, OPNAME, FWD, LOCAL, DOMAIN_CHECK)                         \
  Tensor Graph::METHOD(const Tensor& a) {                                                \
    int ia = operand_id(a, OPNAME);                                                      \
    const auto& x = node_values(ia);                                                     \
    auto out = std::make_shared<std::vector<double>>(x.size());                          \
    for (std::size_t i = 0; i < x.size(); ++i) {                                         \
      const double v = x[i];                                                             \
      DOMAIN_CHECK;                                                                      \
      (*out)[i] = FWD;                                                                   \
    }                                                                                    \
    Node node;                                                                           \
    node.shape = nodes_[ia].shape;                                                       \
    node.values = std::move(out);                                                        \
    node.operands = {ia};                                                                \
    node.needs_grad = nodes_[ia].needs_grad;                                             \
    node.op = OPNAME;                                                                    \
    if (node.needs_grad) {                                                               \
      node.backprop = [ia](Graph& g, int self) {                                         \
        const auto& dy = g.grads_[self];                                                 \
        const auto& x = g.node_values(ia);                                               \
        const auto& y = g.node_values(self);                                             \
        auto& dx = g.grad_buf(ia);                                                       \
        for (std::size_t i = 0; i < dx.size(); ++i) {                                    \
          const double v = x[i];                                                         \
          const double fv = y[i];                                                        \
          (void)v;                                                                       \
          (void)fv;                                                                      \
          dx[i] += dy[i] * (LOCAL);                                                      \
        }                                                                                \
      };                                                                                 \
    }                                                                                    \
    return wrap(record(std::move(node)));                                                \
  }

GANEM_UNARY_OP(exp, "exp", std::exp(v), fv,
               if (v > 700.0) domain_error_at("exp", v, static_cast<std::int64_t>(i)))
GANEM_UNARY_OP(log, "log", std::log(v), 1.0 / v,
               if (!(v > 0.0)) domain_error_at("log", v, static_cast<std::int64_t>(i)))
GANEM_UNARY_OP(sigmoid, "sigmoid",
               (v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v))),
               fv * (1.0 - fv), (void)0)
GANEM_UNARY_OP(logit, "logit", std::log(v / (1.0 - v)), 1.0 / (v * (1.0 - v)),
               if (!(v > 0.0 && v < 1.0)) domain_error_at("logit", v, static_cast<std::int64_t>(i)))
GANEM_UNARY_OP(tanh, "tanh", std::tanh(v), 1.0 - fv * fv, (void)0)

#undef GANEM_UNARY_OP

Tensor Graph::leaky_relu(const Tensor& a, double slope) {
  int ia = operand_id(a, "leaky_relu");
  const auto& x = node_values(ia);
  auto out = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) (*out)[i] = x[i] >= 0 ? x[i] : slope * x[i];
  Node node;
  node.shape = nodes_[ia].shape;
  node.values = std::move(out);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "leaky_relu";
  if (node.needs_grad) {
    node.backprop = [ia, slope](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      const auto& x = g.node_values(ia);
      auto& dx = g.grad_buf(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (x[i] >= 0 ? 1.0 : slope);
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) fail("clamp: lo must not exceed hi");
  int ia = operand_id(a, "clamp");
  const auto& x = node_values(ia);
  auto out = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) (*out)[i] = std::min(hi, std::max(lo, x[i]));
  Node node;
  node.shape = nodes_[ia].shape;
  node.values = std::move(out);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "clamp";
  if (node.needs_grad) {
    node.backprop = [ia, lo, hi](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      const auto& x = g.node_values(ia);
      auto& dx = g.grad_buf(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x[i] >= lo && x[i] <= hi) dx[i] += dy[i];
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  int ia = operand_id(a, "matmul");
  int ib = operand_id(b, "matmul");
  const Shape& sa = nodes_[ia].shape;
  const Shape& sb = nodes_[ib].shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_error("matmul", sa, sb);
  const int m = sa[0], k = sa[1], n = sb[1];
  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);
  auto out = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* crow = &(*out)[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Node node;
  node.shape = {m, n};
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "matmul";
  if (node.needs_grad) {
    node.backprop = [ia, ib, m, k, n](Graph& g, int self) {
      const auto& dc = g.grads_[self];
      if (g.nodes_[ia].needs_grad) {
        // dA = dC * B^T
        const auto& bv = g.node_values(ib);
        auto& da = g.grad_buf(ia);
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* dcrow = &dc[static_cast<std::size_t>(i) * n];
            const double* brow = &bv[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            da[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (g.nodes_[ib].needs_grad) {
        // dB = A^T * dC
        const auto& av = g.node_values(ia);
        auto& db = g.grad_buf(ib);
        for (int i = 0; i < m; ++i) {
          const double* arow = &av[static_cast<std::size_t>(i) * k];
          const double* dcrow = &dc[static_cast<std::size_t>(i) * n];
          for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            double* dbrow = &db[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
          }
        }
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::matmul_nt(const Tensor& a, const Tensor& b) {
  int ia = operand_id(a, "matmul_nt");
  int ib = operand_id(b, "matmul_nt");
  const Shape& sa = nodes_[ia].shape;
  const Shape& sb = nodes_[ib].shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_error("matmul_nt", sa, sb);
  const int m = sa[0], k = sa[1], n = sb[0];
  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);
  auto out = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = &av[static_cast<std::size_t>(i) * k];
    double* crow = &(*out)[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) {
      const double* brow = &bv[static_cast<std::size_t>(j) * k];
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
  Node node;
  node.shape = {m, n};
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "matmul_nt";
  if (node.needs_grad) {
    node.backprop = [ia, ib, m, k, n](Graph& g, int self) {
      const auto& dc = g.grads_[self];  // [m x n]
      if (g.nodes_[ia].needs_grad) {
        // dA = dC * B
        const auto& bv = g.node_values(ib);
        auto& da = g.grad_buf(ia);
        for (int i = 0; i < m; ++i) {
          const double* dcrow = &dc[static_cast<std::size_t>(i) * n];
          double* darow = &da[static_cast<std::size_t>(i) * k];
          for (int j = 0; j < n; ++j) {
            const double d = dcrow[j];
            const double* brow = &bv[static_cast<std::size_t>(j) * k];
            for (int p = 0; p < k; ++p) darow[p] += d * brow[p];
          }
        }
      }
      if (g.nodes_[ib].needs_grad) {
        // dB = dC^T * A
        const auto& av = g.node_values(ia);
        auto& db = g.grad_buf(ib);
        for (int i = 0; i < m; ++i) {
          const double* dcrow = &dc[static_cast<std::size_t>(i) * n];
          const double* arow = &av[static_cast<std::size_t>(i) * k];
          for (int j = 0; j < n; ++j) {
            const double d = dcrow[j];
            double* dbrow = &db[static_cast<std::size_t>(j) * k];
            for (int p = 0; p < k; ++p) dbrow[p] += d * arow[p];
          }
        }
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  int ia = operand_id(a, "add");
  int ib = operand_id(b, "add");
  const Shape& sa = nodes_[ia].shape;
  const Shape& sb = nodes_[ib].shape;
  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);

  // Row broadcast: [n x d] + [d] adds b to every row of a.
  const bool broadcast = (sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0]);
  if (!broadcast && sa != sb) shape_error("add", sa, sb);

  auto out = std::make_shared<std::vector<double>>(av.size());
  if (broadcast) {
    const int n = sa[0], d = sa[1];
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < d; ++j)
        (*out)[static_cast<std::size_t>(r) * d + j] = av[static_cast<std::size_t>(r) * d + j] + bv[j];
  } else {
    for (std::size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] + bv[i];
  }
  Node node;
  node.shape = sa;
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "add";
  if (node.needs_grad) {
    node.backprop = [ia, ib, broadcast](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      if (g.nodes_[ia].needs_grad) {
        auto& da = g.grad_buf(ia);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
      }
      if (g.nodes_[ib].needs_grad) {
        auto& db = g.grad_buf(ib);
        if (broadcast) {
          const std::size_t d = db.size();
          for (std::size_t i = 0; i < dy.size(); ++i) db[i % d] += dy[i];
        } else {
          for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i];
        }
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  int ia = operand_id(a, "sub");
  int ib = operand_id(b, "sub");
  if (nodes_[ia].shape != nodes_[ib].shape) shape_error("sub", nodes_[ia].shape, nodes_[ib].shape);
  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);
  auto out = std::make_shared<std::vector<double>>(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] - bv[i];
  Node node;
  node.shape = nodes_[ia].shape;
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "sub";
  if (node.needs_grad) {
    node.backprop = [ia, ib](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      if (g.nodes_[ia].needs_grad) {
        auto& da = g.grad_buf(ia);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
      }
      if (g.nodes_[ib].needs_grad) {
        auto& db = g.grad_buf(ib);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dy[i];
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  int ia = operand_id(a, "mul");
  int ib = operand_id(b, "mul");
  if (nodes_[ia].shape != nodes_[ib].shape) shape_error("mul", nodes_[ia].shape, nodes_[ib].shape);
  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);
  auto out = std::make_shared<std::vector<double>>(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) (*out)[i] = av[i] * bv[i];
  Node node;
  node.shape = nodes_[ia].shape;
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "mul";
  if (node.needs_grad) {
    node.backprop = [ia, ib](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      if (g.nodes_[ia].needs_grad) {
        const auto& bvv = g.node_values(ib);
        auto& da = g.grad_buf(ia);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bvv[i];
      }
      if (g.nodes_[ib].needs_grad) {
        const auto& avv = g.node_values(ia);
        auto& db = g.grad_buf(ib);
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * avv[i];
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::sum(const Tensor& a) {
  int ia = operand_id(a, "sum");
  const auto& x = node_values(ia);
  double acc = 0.0;
  for (double v : x) acc += v;
  Node node;
  node.shape = {1};
  node.values = std::make_shared<std::vector<double>>(1, acc);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "sum";
  if (node.needs_grad) {
    node.backprop = [ia](Graph& g, int self) {
      const double d = g.grads_[self][0];
      auto& dx = g.grad_buf(ia);
      for (auto& v : dx) v += d;
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::mean(const Tensor& a) {
  int ia = operand_id(a, "mean");
  const auto& x = node_values(ia);
  double acc = 0.0;
  for (double v : x) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Node node;
  node.shape = {1};
  node.values = std::make_shared<std::vector<double>>(1, acc * inv);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "mean";
  if (node.needs_grad) {
    node.backprop = [ia, inv](Graph& g, int self) {
      const double d = g.grads_[self][0] * inv;
      auto& dx = g.grad_buf(ia);
      for (auto& v : dx) v += d;
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::scale(const Tensor& a, double k) {
  int ia = operand_id(a, "scale");
  const auto& x = node_values(ia);
  auto out = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) (*out)[i] = k * x[i];
  Node node;
  node.shape = nodes_[ia].shape;
  node.values = std::move(out);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "scale";
  if (node.needs_grad) {
    node.backprop = [ia, k](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      auto& dx = g.grad_buf(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += k * dy[i];
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::softmax(const Tensor& a) {
  int ia = operand_id(a, "softmax");
  const Shape& s = nodes_[ia].shape;
  const int width = s.back();
  const auto& x = node_values(ia);
  const std::size_t rows = x.size() / width;
  auto out = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = &x[r * width];
    double* yi = &(*out)[r * width];
    double mx = xi[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (int j = 0; j < width; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < width; ++j) yi[j] *= inv;
  }
  Node node;
  node.shape = s;
  node.values = std::move(out);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "softmax";
  if (node.needs_grad) {
    node.backprop = [ia, width](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      const auto& y = g.node_values(self);
      auto& dx = g.grad_buf(ia);
      const std::size_t rows = y.size() / width;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yi = &y[r * width];
        const double* di = &dy[r * width];
        double dot = 0.0;
        for (int j = 0; j < width; ++j) dot += yi[j] * di[j];
        double* oi = &dx[r * width];
        for (int j = 0; j < width; ++j) oi[j] += yi[j] * (di[j] - dot);
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::concat(const Tensor& a, const Tensor& b, int axis) {
  int ia = operand_id(a, "concat");
  int ib = operand_id(b, "concat");
  const Shape& sa = nodes_[ia].shape;
  const Shape& sb = nodes_[ib].shape;
  if (sa.size() != sb.size()) shape_error("concat", sa, sb);
  const int rank = static_cast<int>(sa.size());
  if (axis < 0 || axis >= rank) fail("concat: axis out of range");
  for (int d = 0; d < rank; ++d)
    if (d != axis && sa[d] != sb[d]) shape_error("concat", sa, sb);
  if (rank > 2) fail("concat: only rank 1 and 2 supported");

  const auto& av = node_values(ia);
  const auto& bv = node_values(ib);
  Shape out_shape = sa;
  out_shape[axis] += sb[axis];
  auto out = std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_size(out_shape)));

  // Treat rank-1 as a single row (axis 0 on rank 1 behaves like column concat).
  const int arows = rank == 2 ? sa[0] : 1;
  const int acols = rank == 2 ? sa[1] : sa[0];
  const int bcols = rank == 2 ? sb[1] : sb[0];
  const bool row_axis = (rank == 2 && axis == 0);
  if (row_axis) {
    std::copy(av.begin(), av.end(), out->begin());
    std::copy(bv.begin(), bv.end(), out->begin() + static_cast<std::ptrdiff_t>(av.size()));
  } else {
    for (int r = 0; r < arows; ++r) {
      std::copy(av.begin() + static_cast<std::ptrdiff_t>(r) * acols,
                av.begin() + static_cast<std::ptrdiff_t>(r + 1) * acols,
                out->begin() + static_cast<std::ptrdiff_t>(r) * (acols + bcols));
      std::copy(bv.begin() + static_cast<std::ptrdiff_t>(r) * bcols,
                bv.begin() + static_cast<std::ptrdiff_t>(r + 1) * bcols,
                out->begin() + static_cast<std::ptrdiff_t>(r) * (acols + bcols) + acols);
    }
  }
  Node node;
  node.shape = out_shape;
  node.values = std::move(out);
  node.operands = {ia, ib};
  node.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
  node.op = "concat";
  if (node.needs_grad) {
    node.backprop = [ia, ib, arows, acols, bcols, row_axis](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      if (row_axis) {
        if (g.nodes_[ia].needs_grad) {
          auto& da = g.grad_buf(ia);
          for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];
        }
        if (g.nodes_[ib].needs_grad) {
          auto& db = g.grad_buf(ib);
          const std::size_t off = g.node_values(ia).size();
          for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[off + i];
        }
        return;
      }
      for (int r = 0; r < arows; ++r) {
        const double* drow = &dy[static_cast<std::size_t>(r) * (acols + bcols)];
        if (g.nodes_[ia].needs_grad) {
          auto& da = g.grad_buf(ia);
          for (int j = 0; j < acols; ++j) da[static_cast<std::size_t>(r) * acols + j] += drow[j];
        }
        if (g.nodes_[ib].needs_grad) {
          auto& db = g.grad_buf(ib);
          for (int j = 0; j < bcols; ++j) db[static_cast<std::size_t>(r) * bcols + j] += drow[acols + j];
        }
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::slice(const Tensor& a, int axis, int start, int len) {
  int ia = operand_id(a, "slice");
  const Shape& s = nodes_[ia].shape;
  const int rank = static_cast<int>(s.size());
  if (rank > 2) fail("slice: only rank 1 and 2 supported");
  if (axis < 0 || axis >= rank) fail("slice: axis out of range");
  if (len <= 0 || start < 0 || start + len > s[axis]) {
    std::ostringstream msg;
    msg << "slice: range [" << start << ", " << start + len << ") out of bounds for axis " << axis
        << " of " << shape_str(s);
    fail(msg.str());
  }
  const auto& x = node_values(ia);
  Shape out_shape = s;
  out_shape[axis] = len;
  auto out = std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_size(out_shape)));
  const int ncols = rank == 2 ? s[1] : s[0];
  if (rank == 1 || axis == 0) {
    const int rowlen = rank == 2 ? ncols : 1;
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(start) * rowlen,
              x.begin() + static_cast<std::ptrdiff_t>(start + len) * rowlen, out->begin());
  } else {
    for (int r = 0; r < s[0]; ++r)
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(r) * ncols + start,
                x.begin() + static_cast<std::ptrdiff_t>(r) * ncols + start + len,
                out->begin() + static_cast<std::ptrdiff_t>(r) * len);
  }
  Node node;
  node.shape = out_shape;
  node.values = std::move(out);
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "slice";
  if (node.needs_grad) {
    const int nrows = rank == 2 ? s[0] : 1;
    const bool col_slice = (rank == 2 && axis == 1);
    const int rowlen = rank == 2 ? s[1] : 1;
    node.backprop = [ia, start, len, nrows, rowlen, col_slice](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      auto& dx = g.grad_buf(ia);
      if (col_slice) {
        for (int r = 0; r < nrows; ++r)
          for (int j = 0; j < len; ++j)
            dx[static_cast<std::size_t>(r) * rowlen + start + j] += dy[static_cast<std::size_t>(r) * len + j];
      } else {
        const std::size_t off = static_cast<std::size_t>(start) * rowlen;
        for (std::size_t i = 0; i < dy.size(); ++i) dx[off + i] += dy[i];
      }
    };
  }
  return wrap(record(std::move(node)));
}

Tensor Graph::reshape(const Tensor& a, Shape shape) {
  int ia = operand_id(a, "reshape");
  check_valid_shape(shape, "reshape");
  if (shape_size(shape) != shape_size(nodes_[ia].shape)) shape_error("reshape", nodes_[ia].shape, shape);
  Node node;
  node.shape = std::move(shape);
  node.values = std::make_shared<std::vector<double>>(node_values(ia));
  node.operands = {ia};
  node.needs_grad = nodes_[ia].needs_grad;
  node.op = "reshape";
  if (node.needs_grad) {
    node.backprop = [ia](Graph& g, int self) {
      const auto& dy = g.grads_[self];
      auto& dx = g.grad_buf(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    };
  }
  return wrap(record(std::move(node)));
}

void Graph::backward(const Tensor& loss) {
  if (nodes_.empty()) fail("backward: empty graph");
  if (!loss.attached() || loss.graph_ != this) fail("backward: loss not recorded on this graph");
  if (loss.size() != 1) fail("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

  grads_.assign(nodes_.size(), {});
  grads_[loss.node_] = {1.0};

  // Reverse insertion order is a reverse topological order: operands always
  // precede their consumers. A node is visited only once some consumer has
  // deposited gradient into its buffer, so subgraphs off the loss path and
  // constant-only subgraphs are skipped for free.
  for (int id = loss.node_; id >= 0; --id) {
    if (grads_[id].empty() || !nodes_[id].backprop) continue;
    nodes_[id].backprop(*this, id);
  }
  backward_done_ = true;
}

Tensor Graph::grad(const Tensor& t) const {
  auto gv = grad_values(t);
  return Tensor(nodes_[t.node_].shape, std::vector<double>(gv.begin(), gv.end()));
}

std::span<const double> Graph::grad_values(const Tensor& t) const {
  if (!backward_done_) fail("grad: backward has not been run");
  if (!t.attached() || t.graph_ != this) fail("grad: tensor not recorded on this graph");
  const auto& g = grads_[t.node_];
  if (g.empty()) {
    // Untouched by backward: gradient is identically zero.
    static thread_local std::vector<double> zeros;
    zeros.assign(nodes_[t.node_].values->size(), 0.0);
    return {zeros.data(), zeros.size()};
  }
  return {g.data(), g.size()};
}

// ---------------------------------------------------------------------------
// Initialization

Tensor init_params(const Shape& shape, const Init& scheme, Rng& rng) {
  check_valid_shape(shape, "init_params");
  std::vector<double> v(static_cast<std::size_t>(shape_size(shape)));
  switch (scheme.kind) {
    case Init::Kind::Uniform:
      if (scheme.hi < scheme.lo) fail("init_params: uniform bounds reversed");
      for (auto& x : v) x = rng.uniform(scheme.lo, scheme.hi);
      break;
    case Init::Kind::ScaledNormal: {
      if (scheme.fan_in <= 0) fail("init_params: fan_in must be positive");
      const double sd = 1.0 / std::sqrt(static_cast<double>(scheme.fan_in));
      for (auto& x : v) x = rng.normal(0.0, sd);
      break;
    }
  }
  return Tensor(shape, std::move(v));
}

Tensor init_params(const Shape& shape, const Init& scheme, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(shape, scheme, rng);
}

}  // namespace ganem
