#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "debiascope/tensor.hpp"

namespace debiascope::nd {

enum class Op {
  kInput,
  kIndexInput,
  kParam,
  kConstant,
  kMatMul,            // (M,K)x(K,N) or (B,M,K)x(K,N)
  kBatchMatMul,       // (G,M,K)x(G,K,N); trans_b: rhs is (G,N,K)
  kAdd,
  kSub,
  kMul,
  kAddBias,           // (..,N) + (N,)
  kScale,             // x * c0
  kAddScalar,         // x + c0
  kRelu,
  kSigmoid,
  kSquare,
  kLayerNorm,         // x, gain, bias; normalizes last dim
  kCausalSoftmax,     // (G,T,T), row i attends to j <= i
  kEmbed,             // table (V,D) gathered by ids
  kSelectRows,        // x (B,T,D), pos (B,) -> (B,D)
  kSplitLast,         // (..,D) -> (..,a0,a1), D == a0*a1
  kMergeLast2,        // (..,n0,n1) -> (..,n0*n1)
  kMergeFirst2,       // (d0,d1,..) -> (d0*d1,..)
  kSplitFirst,        // (d0*a0,..) -> (d0,a0,..)
  kTranspose0213,     // (d0,d1,d2,d3) -> (d0,d2,d1,d3)
  kMeanAll,
  kWeightedMse,       // pred, target, w -> scalar
  kWeightedBceLogits, // logits, labels, w -> scalar
  kWeightedBceProb,   // probs, labels, w -> scalar (clamped at 1e-7)
  kSoftmaxXent,       // logits (N,V), target ids (N,), w (N,) -> scalar
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<int> in;     // value inputs
  int idx_in = -1;         // index input (embed / select_rows / softmax_xent)
  double c0 = 0.0;         // scalar attribute
  std::int64_t a0 = 0;     // integer attributes
  std::string name;        // inputs and params only
  bool requires_grad = false;
  Tensor value;
  Tensor grad;
  IndexTensor ivalue;      // kIndexInput only
};

// Fixed-topology computation graph with reverse-mode gradients. Nodes
// are appended in evaluation order, so the node list is always
// topologically sorted. Input shapes may change between forward calls
// (batch size, padded sequence length); parameter shapes are fixed at
// construction.
//
// A Graph instance is owned by a single training run; separate runs
// build separate graphs and may execute on distinct threads.
class Graph {
 public:
  int input(const std::string& name);
  int index_input(const std::string& name);
  int param(const std::string& name, Tensor init);
  int constant(Tensor value);

  int matmul(int a, int b);
  int bmm(int a, int b, bool trans_b = false);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int add_bias(int x, int bias);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int relu(int a);
  int sigmoid(int a);
  int square(int a);
  int layer_norm(int x, int gain, int bias);
  int causal_softmax(int scores);
  int embed(int table, int ids);
  int select_rows(int x, int pos);
  int split_last(int a, std::int64_t n0, std::int64_t n1);
  int merge_last2(int a);
  int merge_first2(int a);
  int split_first(int a, std::int64_t second);
  int transpose_0213(int a);
  int mean_all(int a);
  int weighted_mse(int pred, int target, int w);
  int weighted_bce_logits(int logits, int labels, int w);
  int weighted_bce_prob(int probs, int labels, int w);
  int softmax_xent(int logits, int target_ids, int w);

  void bind(const std::string& name, Tensor value);
  void bind_ids(const std::string& name, IndexTensor ids);

  // Evaluates every node in order. Deterministic: identical bindings
  // and parameters give bit-identical values.
  void forward();

  // Accumulates d(loss)/d(node) for every node that leads to a
  // parameter. Requires a prior forward() and a scalar loss node.
  void backward(int loss);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(int id) const;
  Tensor& param_value(int id);

  const std::vector<int>& params() const { return params_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  NamedTensors export_params() const;
  void import_params(const NamedTensors& values);

  // Throws naming the first node holding a non-finite value.
  void check_all_finite() const;

 private:
  int push(Node n);
  int check_id(int id, const char* what) const;
  void eval_node(int id);
  void back_node(int id);
  [[noreturn]] void fail(int id, const std::string& msg) const;

  std::vector<Node> nodes_;
  std::vector<int> params_;
  std::unordered_map<std::string, int> by_name_;
  bool forward_done_ = false;
};

}  // namespace debiascope::nd
