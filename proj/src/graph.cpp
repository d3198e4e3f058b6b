#include "debiascope/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace debiascope::nd {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

constexpr double kProbClamp = 1e-7;

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid_scalar(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kIndexInput: return "index_input";
    case Op::kParam: return "param";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kBatchMatMul: return "bmm";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAddBias: return "add_bias";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kCausalSoftmax: return "causal_softmax";
    case Op::kEmbed: return "embed";
    case Op::kSelectRows: return "select_rows";
    case Op::kSplitLast: return "split_last";
    case Op::kMergeLast2: return "merge_last2";
    case Op::kMergeFirst2: return "merge_first2";
    case Op::kSplitFirst: return "split_first";
    case Op::kTranspose0213: return "transpose_0213";
    case Op::kMeanAll: return "mean_all";
    case Op::kWeightedMse: return "weighted_mse";
    case Op::kWeightedBceLogits: return "weighted_bce_logits";
    case Op::kWeightedBceProb: return "weighted_bce_prob";
    case Op::kSoftmaxXent: return "softmax_xent";
  }
  return "?";
}

void Graph::fail(int id, const std::string& msg) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  throw std::runtime_error("graph node " + std::to_string(id) + " (" + op_name(n.op) +
                           (n.name.empty() ? "" : " '" + n.name + "'") + "): " + msg);
}

int Graph::check_id(int id, const char* what) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument(std::string("graph: bad node id for ") + what);
  return id;
}

int Graph::push(Node n) {
  for (int i : n.in) {
    check_id(i, op_name(n.op));
    if (nodes_[static_cast<std::size_t>(i)].requires_grad) n.requires_grad = true;
  }
  if (n.op == Op::kParam) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(const std::string& name) {
  if (by_name_.count(name)) throw std::invalid_argument("graph: duplicate input name " + name);
  Node n;
  n.op = Op::kInput;
  n.name = name;
  int id = push(std::move(n));
  by_name_[name] = id;
  return id;
}

int Graph::index_input(const std::string& name) {
  if (by_name_.count(name)) throw std::invalid_argument("graph: duplicate input name " + name);
  Node n;
  n.op = Op::kIndexInput;
  n.name = name;
  int id = push(std::move(n));
  by_name_[name] = id;
  return id;
}

int Graph::param(const std::string& name, Tensor init) {
  if (by_name_.count(name)) throw std::invalid_argument("graph: duplicate parameter name " + name);
  Node n;
  n.op = Op::kParam;
  n.name = name;
  n.value = std::move(init);
  int id = push(std::move(n));
  by_name_[name] = id;
  params_.push_back(id);
  return id;
}

int Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

#define DB_BINARY(fname, opk)                        \
  int Graph::fname(int a, int b) {                   \
    Node n;                                          \
    n.op = opk;                                      \
    n.in = {check_id(a, #fname), check_id(b, #fname)}; \
    return push(std::move(n));                       \
  }

DB_BINARY(add, Op::kAdd)
DB_BINARY(sub, Op::kSub)
DB_BINARY(mul, Op::kMul)
DB_BINARY(matmul, Op::kMatMul)
#undef DB_BINARY

int Graph::bmm(int a, int b, bool trans_b) {
  Node n;
  n.op = Op::kBatchMatMul;
  n.in = {check_id(a, "bmm"), check_id(b, "bmm")};
  n.a0 = trans_b ? 1 : 0;
  return push(std::move(n));
}

int Graph::add_bias(int x, int bias) {
  Node n;
  n.op = Op::kAddBias;
  n.in = {check_id(x, "add_bias"), check_id(bias, "add_bias")};
  return push(std::move(n));
}

int Graph::scale(int a, double c) {
  Node n;
  n.op = Op::kScale;
  n.in = {check_id(a, "scale")};
  n.c0 = c;
  return push(std::move(n));
}

int Graph::add_scalar(int a, double c) {
  Node n;
  n.op = Op::kAddScalar;
  n.in = {check_id(a, "add_scalar")};
  n.c0 = c;
  return push(std::move(n));
}

#define DB_UNARY(fname, opk)              \
  int Graph::fname(int a) {               \
    Node n;                               \
    n.op = opk;                           \
    n.in = {check_id(a, #fname)};         \
    return push(std::move(n));            \
  }

DB_UNARY(relu, Op::kRelu)
DB_UNARY(sigmoid, Op::kSigmoid)
DB_UNARY(square, Op::kSquare)
DB_UNARY(merge_last2, Op::kMergeLast2)
DB_UNARY(merge_first2, Op::kMergeFirst2)
DB_UNARY(transpose_0213, Op::kTranspose0213)
DB_UNARY(mean_all, Op::kMeanAll)
#undef DB_UNARY

int Graph::layer_norm(int x, int gain, int bias) {
  Node n;
  n.op = Op::kLayerNorm;
  n.in = {check_id(x, "layer_norm"), check_id(gain, "layer_norm"), check_id(bias, "layer_norm")};
  return push(std::move(n));
}

int Graph::causal_softmax(int scores) {
  Node n;
  n.op = Op::kCausalSoftmax;
  n.in = {check_id(scores, "causal_softmax")};
  return push(std::move(n));
}

int Graph::embed(int table, int ids) {
  Node n;
  n.op = Op::kEmbed;
  n.in = {check_id(table, "embed")};
  n.idx_in = check_id(ids, "embed");
  return push(std::move(n));
}

int Graph::select_rows(int x, int pos) {
  Node n;
  n.op = Op::kSelectRows;
  n.in = {check_id(x, "select_rows")};
  n.idx_in = check_id(pos, "select_rows");
  return push(std::move(n));
}

int Graph::split_last(int a, std::int64_t n0, std::int64_t n1) {
  Node n;
  n.op = Op::kSplitLast;
  n.in = {check_id(a, "split_last")};
  n.a0 = n0;
  n.c0 = static_cast<double>(n1);
  return push(std::move(n));
}

int Graph::split_first(int a, std::int64_t second) {
  Node n;
  n.op = Op::kSplitFirst;
  n.in = {check_id(a, "split_first")};
  n.a0 = second;
  return push(std::move(n));
}

#define DB_TERNARY(fname, opk)                                                   \
  int Graph::fname(int a, int b, int c) {                                        \
    Node n;                                                                      \
    n.op = opk;                                                                  \
    n.in = {check_id(a, #fname), check_id(b, #fname), check_id(c, #fname)};      \
    return push(std::move(n));                                                   \
  }

DB_TERNARY(weighted_mse, Op::kWeightedMse)
DB_TERNARY(weighted_bce_logits, Op::kWeightedBceLogits)
DB_TERNARY(weighted_bce_prob, Op::kWeightedBceProb)
#undef DB_TERNARY

int Graph::softmax_xent(int logits, int target_ids, int w) {
  Node n;
  n.op = Op::kSoftmaxXent;
  n.in = {check_id(logits, "softmax_xent"), check_id(w, "softmax_xent")};
  n.idx_in = check_id(target_ids, "softmax_xent");
  return push(std::move(n));
}

void Graph::bind(const std::string& name, Tensor value) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("graph: no input named " + name);
  Node& n = nodes_[static_cast<std::size_t>(it->second)];
  if (n.op != Op::kInput) throw std::invalid_argument("graph: " + name + " is not a value input");
  n.value = std::move(value);
  forward_done_ = false;
}

void Graph::bind_ids(const std::string& name, IndexTensor ids) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("graph: no input named " + name);
  Node& n = nodes_[static_cast<std::size_t>(it->second)];
  if (n.op != Op::kIndexInput) throw std::invalid_argument("graph: " + name + " is not an index input");
  n.ivalue = std::move(ids);
  forward_done_ = false;
}

Tensor& Graph::param_value(int id) {
  check_id(id, "param_value");
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op != Op::kParam) throw std::invalid_argument("graph: node is not a parameter");
  return n.value;
}

const Tensor& Graph::grad(int id) const {
  check_id(id, "grad");
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) fail(id, "gradient was not tracked for this node");
  return n.grad;
}

NamedTensors Graph::export_params() const {
  NamedTensors out;
  for (int id : params_) out[nodes_[static_cast<std::size_t>(id)].name] = nodes_[static_cast<std::size_t>(id)].value;
  return out;
}

void Graph::import_params(const NamedTensors& values) {
  for (int id : params_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    auto it = values.find(n.name);
    if (it == values.end()) throw std::invalid_argument("graph: missing parameter " + n.name);
    if (it->second.shape != n.value.shape)
      throw std::invalid_argument("graph: parameter " + n.name + " shape mismatch, expected " +
                                  shape_str(n.value.shape) + " got " + shape_str(it->second.shape));
    n.value = it->second;
  }
  forward_done_ = false;
}

void Graph::check_all_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::kIndexInput) continue;
    if (!nodes_[i].value.all_finite()) fail(static_cast<int>(i), "non-finite value");
  }
}

void Graph::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) eval_node(static_cast<int>(i));
  forward_done_ = true;
}

void Graph::backward(int loss) {
  check_id(loss, "backward");
  if (!forward_done_) throw std::runtime_error("graph: backward called before forward");
  if (nodes_[static_cast<std::size_t>(loss)].value.numel() != 1) fail(loss, "loss node is not scalar");
  if (!nodes_[static_cast<std::size_t>(loss)].value.all_finite()) fail(loss, "non-finite loss");
  for (Node& n : nodes_) {
    if (!n.requires_grad) continue;
    if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
    else n.grad.fill(0.0);
  }
  Node& ln = nodes_[static_cast<std::size_t>(loss)];
  if (!ln.requires_grad) return;  // loss does not depend on any parameter
  ln.grad.data[0] = 1.0;
  for (int i = loss; i >= 0; --i) back_node(i);
}

void Graph::eval_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto in = [&](int k) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])].value; };

  switch (n.op) {
    case Op::kInput:
      if (n.value.shape.empty() && n.value.data.empty()) fail(id, "input was never bound");
      return;
    case Op::kIndexInput:
      if (n.ivalue.shape.empty() && n.ivalue.data.empty()) fail(id, "index input was never bound");
      return;
    case Op::kParam:
    case Op::kConstant:
      return;

    case Op::kMatMul: {
      const Tensor& A = in(0);
      const Tensor& B = in(1);
      if (B.rank() != 2) fail(id, "rhs must be 2D, got " + shape_str(B.shape));
      if (A.rank() != 2 && A.rank() != 3) fail(id, "lhs must be 2D or 3D, got " + shape_str(A.shape));
      std::int64_t K = A.shape.back();
      if (K != B.shape[0])
        fail(id, "inner dimensions differ: " + shape_str(A.shape) + " x " + shape_str(B.shape));
      std::int64_t rows = A.numel() / K;
      std::int64_t N = B.shape[1];
      Shape out_shape = A.shape;
      out_shape.back() = N;
      n.value = Tensor(out_shape);
      CMapM a(A.data.data(), rows, K);
      CMapM b(B.data.data(), K, N);
      MapM c(n.value.data.data(), rows, N);
      c.noalias() = a * b;
      return;
    }

    case Op::kBatchMatMul: {
      const Tensor& A = in(0);
      const Tensor& B = in(1);
      bool tb = n.a0 != 0;
      if (A.rank() != 3 || B.rank() != 3) fail(id, "both operands must be 3D");
      if (A.shape[0] != B.shape[0]) fail(id, "batch dimensions differ");
      std::int64_t G = A.shape[0], M = A.shape[1], K = A.shape[2];
      std::int64_t N = tb ? B.shape[1] : B.shape[2];
      std::int64_t Kb = tb ? B.shape[2] : B.shape[1];
      if (K != Kb) fail(id, "inner dimensions differ: " + shape_str(A.shape) + " x " + shape_str(B.shape));
      n.value = Tensor({G, M, N});
      for (std::int64_t g = 0; g < G; ++g) {
        CMapM a(A.data.data() + g * M * K, M, K);
        MapM c(n.value.data.data() + g * M * N, M, N);
        if (tb) {
          CMapM b(B.data.data() + g * N * K, N, K);
          c.noalias() = a * b.transpose();
        } else {
          CMapM b(B.data.data() + g * K * N, K, N);
          c.noalias() = a * b;
        }
      }
      return;
    }

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& A = in(0);
      const Tensor& B = in(1);
      if (!same_shape(A, B))
        fail(id, "shape mismatch: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
      n.value = Tensor(A.shape);
      const std::size_t m = A.data.size();
      for (std::size_t i = 0; i < m; ++i) {
        double x = A.data[i], y = B.data[i];
        n.value.data[i] = n.op == Op::kAdd ? x + y : n.op == Op::kSub ? x - y : x * y;
      }
      return;
    }

    case Op::kAddBias: {
      const Tensor& X = in(0);
      const Tensor& b = in(1);
      if (b.rank() != 1 || X.shape.empty() || X.shape.back() != b.shape[0])
        fail(id, "bias shape " + shape_str(b.shape) + " does not match " + shape_str(X.shape));
      n.value = X;
      std::int64_t N = b.shape[0];
      std::int64_t rows = X.numel() / N;
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < N; ++j) n.value.data[static_cast<std::size_t>(r * N + j)] += b.data[static_cast<std::size_t>(j)];
      return;
    }

    case Op::kScale: {
      n.value = in(0);
      for (double& x : n.value.data) x *= n.c0;
      return;
    }
    case Op::kAddScalar: {
      n.value = in(0);
      for (double& x : n.value.data) x += n.c0;
      return;
    }
    case Op::kRelu: {
      n.value = in(0);
      for (double& x : n.value.data) x = x > 0.0 ? x : 0.0;
      return;
    }
    case Op::kSigmoid: {
      n.value = in(0);
      for (double& x : n.value.data) x = sigmoid_scalar(x);
      return;
    }
    case Op::kSquare: {
      n.value = in(0);
      for (double& x : n.value.data) x *= x;
      return;
    }

    case Op::kLayerNorm: {
      const Tensor& X = in(0);
      const Tensor& g = in(1);
      const Tensor& b = in(2);
      if (X.shape.empty()) fail(id, "layer_norm on empty shape");
      std::int64_t N = X.shape.back();
      if (g.shape != Shape{N} || b.shape != Shape{N}) fail(id, "gain/bias must have shape [" + std::to_string(N) + "]");
      std::int64_t rows = X.numel() / N;
      n.value = Tensor(X.shape);
      constexpr double eps = 1e-5;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = X.data.data() + r * N;
        double* y = n.value.data.data() + r * N;
        double mean = 0.0;
        for (std::int64_t j = 0; j < N; ++j) mean += x[j];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::int64_t j = 0; j < N; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<double>(N);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < N; ++j)
          y[j] = (x[j] - mean) * inv * g.data[static_cast<std::size_t>(j)] + b.data[static_cast<std::size_t>(j)];
      }
      return;
    }

    case Op::kCausalSoftmax: {
      const Tensor& S = in(0);
      if (S.rank() != 3 || S.shape[1] != S.shape[2]) fail(id, "expected (G,T,T), got " + shape_str(S.shape));
      std::int64_t G = S.shape[0], T = S.shape[1];
      n.value = Tensor(S.shape);
      for (std::int64_t g = 0; g < G; ++g) {
        for (std::int64_t i = 0; i < T; ++i) {
          const double* s = S.data.data() + (g * T + i) * T;
          double* y = n.value.data.data() + (g * T + i) * T;
          double mx = s[0];
          for (std::int64_t j = 1; j <= i; ++j) mx = std::max(mx, s[j]);
          double z = 0.0;
          for (std::int64_t j = 0; j <= i; ++j) z += std::exp(s[j] - mx);
          for (std::int64_t j = 0; j <= i; ++j) y[j] = std::exp(s[j] - mx) / z;
          for (std::int64_t j = i + 1; j < T; ++j) y[j] = 0.0;
        }
      }
      return;
    }

    case Op::kEmbed: {
      const Tensor& table = in(0);
      const IndexTensor& ids = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      if (table.rank() != 2) fail(id, "embedding table must be 2D");
      std::int64_t V = table.shape[0], D = table.shape[1];
      Shape out_shape = ids.shape;
      out_shape.push_back(D);
      n.value = Tensor(out_shape);
      for (std::int64_t i = 0; i < ids.numel(); ++i) {
        std::int64_t t = ids.data[static_cast<std::size_t>(i)];
        if (t < 0 || t >= V) fail(id, "id " + std::to_string(t) + " out of range [0," + std::to_string(V) + ")");
        std::copy_n(table.data.data() + t * D, D, n.value.data.data() + i * D);
      }
      return;
    }

    case Op::kSelectRows: {
      const Tensor& X = in(0);
      const IndexTensor& pos = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      if (X.rank() != 3) fail(id, "expected (B,T,D), got " + shape_str(X.shape));
      std::int64_t B = X.shape[0], T = X.shape[1], D = X.shape[2];
      if (pos.numel() != B) fail(id, "position count does not match batch");
      n.value = Tensor({B, D});
      for (std::int64_t i = 0; i < B; ++i) {
        std::int64_t p = pos.data[static_cast<std::size_t>(i)];
        if (p < 0 || p >= T) fail(id, "position " + std::to_string(p) + " out of range [0," + std::to_string(T) + ")");
        std::copy_n(X.data.data() + (i * T + p) * D, D, n.value.data.data() + i * D);
      }
      return;
    }

    case Op::kSplitLast: {
      const Tensor& X = in(0);
      std::int64_t n0 = n.a0, n1 = static_cast<std::int64_t>(n.c0);
      if (X.shape.empty() || X.shape.back() != n0 * n1)
        fail(id, "cannot split last dim of " + shape_str(X.shape) + " into " + std::to_string(n0) + "x" + std::to_string(n1));
      Shape s(X.shape.begin(), X.shape.end() - 1);
      s.push_back(n0);
      s.push_back(n1);
      n.value = Tensor(std::move(s), X.data);
      return;
    }

    case Op::kMergeLast2: {
      const Tensor& X = in(0);
      if (X.rank() < 2) fail(id, "need at least 2 dims, got " + shape_str(X.shape));
      Shape s(X.shape.begin(), X.shape.end() - 2);
      s.push_back(X.shape[X.rank() - 2] * X.shape[X.rank() - 1]);
      n.value = Tensor(std::move(s), X.data);
      return;
    }

    case Op::kMergeFirst2: {
      const Tensor& X = in(0);
      if (X.rank() < 2) fail(id, "need at least 2 dims, got " + shape_str(X.shape));
      Shape s;
      s.push_back(X.shape[0] * X.shape[1]);
      s.insert(s.end(), X.shape.begin() + 2, X.shape.end());
      n.value = Tensor(std::move(s), X.data);
      return;
    }

    case Op::kSplitFirst: {
      const Tensor& X = in(0);
      if (X.shape.empty() || n.a0 <= 0 || X.shape[0] % n.a0 != 0)
        fail(id, "first dim of " + shape_str(X.shape) + " not divisible by " + std::to_string(n.a0));
      Shape s;
      s.push_back(X.shape[0] / n.a0);
      s.push_back(n.a0);
      s.insert(s.end(), X.shape.begin() + 1, X.shape.end());
      n.value = Tensor(std::move(s), X.data);
      return;
    }

    case Op::kTranspose0213: {
      const Tensor& X = in(0);
      if (X.rank() != 4) fail(id, "expected 4D, got " + shape_str(X.shape));
      std::int64_t d0 = X.shape[0], d1 = X.shape[1], d2 = X.shape[2], d3 = X.shape[3];
      n.value = Tensor({d0, d2, d1, d3});
      for (std::int64_t a = 0; a < d0; ++a)
        for (std::int64_t b = 0; b < d1; ++b)
          for (std::int64_t c = 0; c < d2; ++c)
            std::copy_n(X.data.data() + ((a * d1 + b) * d2 + c) * d3, d3,
                        n.value.data.data() + ((a * d2 + c) * d1 + b) * d3);
      return;
    }

    case Op::kMeanAll: {
      const Tensor& X = in(0);
      if (X.numel() == 0) fail(id, "mean of empty tensor");
      double s = 0.0;
      for (double x : X.data) s += x;
      n.value = Tensor::scalar(s / static_cast<double>(X.numel()));
      return;
    }

    case Op::kWeightedMse: {
      const Tensor& P = in(0);
      const Tensor& T = in(1);
      const Tensor& W = in(2);
      if (!same_shape(P, T) || !same_shape(P, W))
        fail(id, "pred/target/weight shapes differ");
      double sw = 0.0, s = 0.0;
      for (std::size_t i = 0; i < W.data.size(); ++i) sw += W.data[i];
      if (sw <= 0.0) fail(id, "weights sum to zero");
      for (std::size_t i = 0; i < P.data.size(); ++i) {
        double e = P.data[i] - T.data[i];
        s += W.data[i] * e * e;
      }
      n.value = Tensor::scalar(s / sw);
      return;
    }

    case Op::kWeightedBceLogits: {
      const Tensor& Z = in(0);
      const Tensor& A = in(1);
      const Tensor& W = in(2);
      if (!same_shape(Z, A) || !same_shape(Z, W)) fail(id, "logit/label/weight shapes differ");
      double sw = 0.0, s = 0.0;
      for (std::size_t i = 0; i < W.data.size(); ++i) sw += W.data[i];
      if (sw <= 0.0) fail(id, "weights sum to zero");
      for (std::size_t i = 0; i < Z.data.size(); ++i)
        s += W.data[i] * (softplus(Z.data[i]) - A.data[i] * Z.data[i]);
      n.value = Tensor::scalar(s / sw);
      return;
    }

    case Op::kWeightedBceProb: {
      const Tensor& P = in(0);
      const Tensor& A = in(1);
      const Tensor& W = in(2);
      if (!same_shape(P, A) || !same_shape(P, W)) fail(id, "prob/label/weight shapes differ");
      double sw = 0.0, s = 0.0;
      for (std::size_t i = 0; i < W.data.size(); ++i) sw += W.data[i];
      if (sw <= 0.0) fail(id, "weights sum to zero");
      for (std::size_t i = 0; i < P.data.size(); ++i) {
        double a = A.data[i];
        if (a != 0.0 && a != 1.0) fail(id, "label not in {0,1}");
        double p = std::min(std::max(P.data[i], kProbClamp), 1.0 - kProbClamp);
        s += W.data[i] * (-a * std::log(p) - (1.0 - a) * std::log(1.0 - p));
      }
      n.value = Tensor::scalar(s / sw);
      return;
    }

    case Op::kSoftmaxXent: {
      const Tensor& Z = in(0);
      const Tensor& W = in(1);
      const IndexTensor& ids = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      if (Z.rank() != 2) fail(id, "logits must be (N,V), got " + shape_str(Z.shape));
      std::int64_t N = Z.shape[0], V = Z.shape[1];
      if (ids.numel() != N || W.numel() != N) fail(id, "targets/weights do not match logits rows");
      double sw = 0.0, s = 0.0;
      for (std::int64_t i = 0; i < N; ++i) sw += W.data[static_cast<std::size_t>(i)];
      if (sw <= 0.0) fail(id, "weights sum to zero");
      for (std::int64_t i = 0; i < N; ++i) {
        double w = W.data[static_cast<std::size_t>(i)];
        std::int64_t t = ids.data[static_cast<std::size_t>(i)];
        if (w == 0.0 && t < 0) continue;  // padded position
        if (t < 0 || t >= V) fail(id, "target id " + std::to_string(t) + " out of range");
        if (w == 0.0) continue;
        const double* z = Z.data.data() + i * V;
        double mx = z[0];
        for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, z[j]);
        double lse = 0.0;
        for (std::int64_t j = 0; j < V; ++j) lse += std::exp(z[j] - mx);
        lse = mx + std::log(lse);
        s += w * (lse - z[t]);
      }
      n.value = Tensor::scalar(s / sw);
      return;
    }
  }
}

void Graph::back_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  auto inv = [&](int k) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])].value; };
  auto ing = [&](int k) -> Tensor* {
    Node& m = nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(k)])];
    return m.requires_grad ? &m.grad : nullptr;
  };
  const Tensor& G = n.grad;

  switch (n.op) {
    case Op::kInput:
    case Op::kIndexInput:
    case Op::kParam:
    case Op::kConstant:
      return;

    case Op::kMatMul: {
      const Tensor& A = inv(0);
      const Tensor& B = inv(1);
      std::int64_t K = A.shape.back();
      std::int64_t rows = A.numel() / K;
      std::int64_t N = B.shape[1];
      CMapM a(A.data.data(), rows, K);
      CMapM b(B.data.data(), K, N);
      CMapM g(G.data.data(), rows, N);
      if (Tensor* da = ing(0)) MapM(da->data.data(), rows, K).noalias() += g * b.transpose();
      if (Tensor* db = ing(1)) MapM(db->data.data(), K, N).noalias() += a.transpose() * g;
      return;
    }

    case Op::kBatchMatMul: {
      const Tensor& A = inv(0);
      const Tensor& B = inv(1);
      bool tb = n.a0 != 0;
      std::int64_t Gb = A.shape[0], M = A.shape[1], K = A.shape[2];
      std::int64_t N = tb ? B.shape[1] : B.shape[2];
      Tensor* da = ing(0);
      Tensor* db = ing(1);
      for (std::int64_t g = 0; g < Gb; ++g) {
        CMapM a(A.data.data() + g * M * K, M, K);
        CMapM gg(G.data.data() + g * M * N, M, N);
        if (tb) {
          CMapM b(B.data.data() + g * N * K, N, K);
          if (da) MapM(da->data.data() + g * M * K, M, K).noalias() += gg * b;
          if (db) MapM(db->data.data() + g * N * K, N, K).noalias() += gg.transpose() * a;
        } else {
          CMapM b(B.data.data() + g * K * N, K, N);
          if (da) MapM(da->data.data() + g * M * K, M, K).noalias() += gg * b.transpose();
          if (db) MapM(db->data.data() + g * K * N, K, N).noalias() += a.transpose() * gg;
        }
      }
      return;
    }

    case Op::kAdd: {
      for (int k = 0; k < 2; ++k)
        if (Tensor* d = ing(k))
          for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i];
      return;
    }
    case Op::kSub: {
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i];
      if (Tensor* d = ing(1))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] -= G.data[i];
      return;
    }
    case Op::kMul: {
      const Tensor& A = inv(0);
      const Tensor& B = inv(1);
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i] * B.data[i];
      if (Tensor* d = ing(1))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i] * A.data[i];
      return;
    }

    case Op::kAddBias: {
      std::int64_t N = inv(1).shape[0];
      std::int64_t rows = G.numel() / N;
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i];
      if (Tensor* d = ing(1))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < N; ++j) d->data[static_cast<std::size_t>(j)] += G.data[static_cast<std::size_t>(r * N + j)];
      return;
    }

    case Op::kScale: {
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += n.c0 * G.data[i];
      return;
    }
    case Op::kAddScalar: {
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i];
      return;
    }
    case Op::kRelu: {
      const Tensor& X = inv(0);
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += X.data[i] > 0.0 ? G.data[i] : 0.0;
      return;
    }
    case Op::kSigmoid: {
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) {
          double y = n.value.data[i];
          d->data[i] += G.data[i] * y * (1.0 - y);
        }
      return;
    }
    case Op::kSquare: {
      const Tensor& X = inv(0);
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += 2.0 * X.data[i] * G.data[i];
      return;
    }

    case Op::kLayerNorm: {
      const Tensor& X = inv(0);
      const Tensor& gain = inv(1);
      std::int64_t N = X.shape.back();
      std::int64_t rows = X.numel() / N;
      constexpr double eps = 1e-5;
      Tensor* dx = ing(0);
      Tensor* dg = ing(1);
      Tensor* db = ing(2);
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = X.data.data() + r * N;
        const double* gy = G.data.data() + r * N;
        double mean = 0.0;
        for (std::int64_t j = 0; j < N; ++j) mean += x[j];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::int64_t j = 0; j < N; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<double>(N);
        double inv = 1.0 / std::sqrt(var + eps);
        double mean_h = 0.0, mean_hx = 0.0;
        for (std::int64_t j = 0; j < N; ++j) {
          double xh = (x[j] - mean) * inv;
          double h = gy[j] * gain.data[static_cast<std::size_t>(j)];
          mean_h += h;
          mean_hx += h * xh;
          if (dg) dg->data[static_cast<std::size_t>(j)] += gy[j] * xh;
          if (db) db->data[static_cast<std::size_t>(j)] += gy[j];
        }
        mean_h /= static_cast<double>(N);
        mean_hx /= static_cast<double>(N);
        if (dx) {
          double* d = dx->data.data() + r * N;
          for (std::int64_t j = 0; j < N; ++j) {
            double xh = (x[j] - mean) * inv;
            double h = gy[j] * gain.data[static_cast<std::size_t>(j)];
            d[j] += inv * (h - mean_h - xh * mean_hx);
          }
        }
      }
      return;
    }

    case Op::kCausalSoftmax: {
      std::int64_t Gd = n.value.shape[0], T = n.value.shape[1];
      Tensor* dx = ing(0);
      if (!dx) return;
      for (std::int64_t g = 0; g < Gd; ++g)
        for (std::int64_t i = 0; i < T; ++i) {
          const double* y = n.value.data.data() + (g * T + i) * T;
          const double* gy = G.data.data() + (g * T + i) * T;
          double* d = dx->data.data() + (g * T + i) * T;
          double dot = 0.0;
          for (std::int64_t j = 0; j <= i; ++j) dot += y[j] * gy[j];
          for (std::int64_t j = 0; j <= i; ++j) d[j] += y[j] * (gy[j] - dot);
        }
      return;
    }

    case Op::kEmbed: {
      Tensor* dt = ing(0);
      if (!dt) return;
      const IndexTensor& ids = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      std::int64_t D = inv(0).shape[1];
      for (std::int64_t i = 0; i < ids.numel(); ++i) {
        std::int64_t t = ids.data[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < D; ++j) dt->data[static_cast<std::size_t>(t * D + j)] += G.data[static_cast<std::size_t>(i * D + j)];
      }
      return;
    }

    case Op::kSelectRows: {
      Tensor* dx = ing(0);
      if (!dx) return;
      const IndexTensor& pos = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      std::int64_t B = inv(0).shape[0], T = inv(0).shape[1], D = inv(0).shape[2];
      for (std::int64_t i = 0; i < B; ++i) {
        std::int64_t p = pos.data[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < D; ++j) dx->data[static_cast<std::size_t>((i * T + p) * D + j)] += G.data[static_cast<std::size_t>(i * D + j)];
      }
      return;
    }

    case Op::kSplitLast:
    case Op::kMergeLast2:
    case Op::kMergeFirst2:
    case Op::kSplitFirst: {
      if (Tensor* d = ing(0))
        for (std::size_t i = 0; i < G.data.size(); ++i) d->data[i] += G.data[i];
      return;
    }

    case Op::kTranspose0213: {
      Tensor* dx = ing(0);
      if (!dx) return;
      const Tensor& X = inv(0);
      std::int64_t d0 = X.shape[0], d1 = X.shape[1], d2 = X.shape[2], d3 = X.shape[3];
      for (std::int64_t a = 0; a < d0; ++a)
        for (std::int64_t b = 0; b < d1; ++b)
          for (std::int64_t c = 0; c < d2; ++c) {
            const double* src = G.data.data() + ((a * d2 + c) * d1 + b) * d3;
            double* dst = dx->data.data() + ((a * d1 + b) * d2 + c) * d3;
            for (std::int64_t j = 0; j < d3; ++j) dst[j] += src[j];
          }
      return;
    }

    case Op::kMeanAll: {
      if (Tensor* d = ing(0)) {
        double g = G.data[0] / static_cast<double>(inv(0).numel());
        for (double& x : d->data) x += g;
      }
      return;
    }

    case Op::kWeightedMse: {
      const Tensor& P = inv(0);
      const Tensor& T = inv(1);
      const Tensor& W = inv(2);
      double sw = 0.0;
      for (double w : W.data) sw += w;
      double g = G.data[0];
      Tensor* dp = ing(0);
      Tensor* dt = ing(1);
      Tensor* dw = ing(2);
      for (std::size_t i = 0; i < P.data.size(); ++i) {
        double e = P.data[i] - T.data[i];
        if (dp) dp->data[i] += g * 2.0 * W.data[i] * e / sw;
        if (dt) dt->data[i] -= g * 2.0 * W.data[i] * e / sw;
        if (dw) dw->data[i] += g * (e * e - n.value.data[0]) / sw;
      }
      return;
    }

    case Op::kWeightedBceLogits: {
      const Tensor& Z = inv(0);
      const Tensor& A = inv(1);
      const Tensor& W = inv(2);
      double sw = 0.0;
      for (double w : W.data) sw += w;
      double g = G.data[0];
      Tensor* dz = ing(0);
      Tensor* da = ing(1);
      Tensor* dw = ing(2);
      for (std::size_t i = 0; i < Z.data.size(); ++i) {
        if (dz) dz->data[i] += g * W.data[i] * (sigmoid_scalar(Z.data[i]) - A.data[i]) / sw;
        if (da) da->data[i] -= g * W.data[i] * Z.data[i] / sw;
        if (dw) dw->data[i] += g * ((softplus(Z.data[i]) - A.data[i] * Z.data[i]) - n.value.data[0]) / sw;
      }
      return;
    }

    case Op::kWeightedBceProb: {
      const Tensor& P = inv(0);
      const Tensor& A = inv(1);
      const Tensor& W = inv(2);
      double sw = 0.0;
      for (double w : W.data) sw += w;
      double g = G.data[0];
      Tensor* dp = ing(0);
      Tensor* dw = ing(2);
      for (std::size_t i = 0; i < P.data.size(); ++i) {
        double a = A.data[i];
        double raw = P.data[i];
        double p = std::min(std::max(raw, kProbClamp), 1.0 - kProbClamp);
        bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
        if (dp && !clamped) dp->data[i] += g * W.data[i] * (-a / p + (1.0 - a) / (1.0 - p)) / sw;
        if (dw) dw->data[i] += g * ((-a * std::log(p) - (1.0 - a) * std::log(1.0 - p)) - n.value.data[0]) / sw;
      }
      return;
    }

    case Op::kSoftmaxXent: {
      const Tensor& Z = inv(0);
      const Tensor& W = inv(1);
      const IndexTensor& ids = nodes_[static_cast<std::size_t>(n.idx_in)].ivalue;
      std::int64_t N = Z.shape[0], V = Z.shape[1];
      double sw = 0.0;
      for (double w : W.data) sw += w;
      double g = G.data[0];
      Tensor* dz = ing(0);
      Tensor* dw = ing(1);
      for (std::int64_t i = 0; i < N; ++i) {
        double w = W.data[static_cast<std::size_t>(i)];
        std::int64_t t = ids.data[static_cast<std::size_t>(i)];
        if (t < 0) continue;
        const double* z = Z.data.data() + i * V;
        double mx = z[0];
        for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, z[j]);
        double lse = 0.0;
        for (std::int64_t j = 0; j < V; ++j) lse += std::exp(z[j] - mx);
        double logz = mx + std::log(lse);
        if (dz && w != 0.0) {
          double* d = dz->data.data() + i * V;
          for (std::int64_t j = 0; j < V; ++j) {
            double p = std::exp(z[j] - logz);
            d[j] += g * w * (p - (j == t ? 1.0 : 0.0)) / sw;
          }
        }
        if (dw) dw->data[static_cast<std::size_t>(i)] += g * ((logz - z[t]) - n.value.data[0]) / sw;
      }
      return;
    }
  }
}

}  // namespace debiascope::nd
