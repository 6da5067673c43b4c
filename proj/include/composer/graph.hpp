#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "composer/tensor.hpp"

namespace composer::num {

struct NodeId {
  int v = -1;
  bool valid() const { return v >= 0; }
  friend bool operator==(NodeId a, NodeId b) { return a.v == b.v; }
};

class GraphError : public std::runtime_error {
 public:
  GraphError(int node, const std::string& msg)
      : std::runtime_error("graph node " + std::to_string(node) + ": " + msg),
        node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

// Accumulated gradients keyed by parameter node id.
class GradMap {
 public:
  void add(NodeId id, Tensor g) { grads_.emplace(id.v, std::move(g)); }
  bool contains(NodeId id) const { return grads_.count(id.v) > 0; }
  const Tensor& at(NodeId id) const { return grads_.at(id.v); }
  Tensor& at(NodeId id) { return grads_.at(id.v); }
  size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<int, Tensor> grads_;
};

// Reverse-mode tape. Nodes are appended in topological order; forward()
// evaluates lazily up to the requested node and caches every intermediate
// value, backward() walks the tape in reverse. Single-threaded by design.
class Graph {
 public:
  enum class Op {
    Const, Param, MatMul, Transpose, Add, Sub, Mul, Div, Sigmoid, Relu,
    Softmax, LayerNorm, CrossEntropy, SmoothL1, Mse, Concat, Reshape,
    AvgPool2d, UpsampleBilinear2d, Sum
  };

  NodeId param(Tensor t);
  NodeId constant(Tensor t);
  NodeId scalar(double v) { return constant(Tensor::scalar(v)); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);                 // 2-D
  NodeId add(NodeId a, NodeId b);             // same shape, or one scalar
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId sigmoid(NodeId a);
  NodeId relu(NodeId a);
  NodeId softmax(NodeId a);                   // last axis
  NodeId layer_norm(NodeId a);                // last axis, no affine
  NodeId cross_entropy(NodeId probs, NodeId target);  // -sum(t*log(p)), scalar
  NodeId smooth_l1(NodeId a, NodeId b);       // summed Huber, scalar
  NodeId mse(NodeId a, NodeId b);             // mean squared error, scalar
  NodeId concat(std::span<const NodeId> parts, int axis);
  NodeId reshape(NodeId a, std::vector<int> shape);
  NodeId avg_pool2d(NodeId a, int window);    // [H,W,C], stride == window
  NodeId upsample_bilinear2d(NodeId a, int factor);  // [H,W,C]
  NodeId sum(NodeId a);                       // scalar

  // Convenience compositions
  NodeId scale(NodeId a, double k) { return mul(a, scalar(k)); }
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  // max(a, c) and min(a, c) against a constant, via relu
  NodeId max_const(NodeId a, double c);
  NodeId min_const(NodeId a, double c);
  NodeId maximum(NodeId a, NodeId b);         // relu(a-b)+b
  NodeId minimum(NodeId a, NodeId b);

  const Tensor& forward(NodeId root);
  GradMap backward(NodeId root);

  const Tensor& value(NodeId id) const;
  bool has_value(NodeId id) const;
  void set_param_value(NodeId id, const Tensor& t);  // invalidates cache
  bool is_param(NodeId id) const;
  int size() const { return static_cast<int>(nodes_.size()); }
  void reserve(size_t n) { nodes_.reserve(n); }

  const std::vector<int>& shape_of(NodeId id) const;

 private:
  struct Node {
    Op op;
    std::vector<int> in;
    std::vector<int> out_shape;
    Tensor val;
    bool has_val = false;
    int iattr = 0;              // axis / window / factor
    std::vector<int> shape_attr;
  };

  NodeId push(Node n);
  void compute(int i);
  void backprop(int i, const Tensor& gout, std::vector<Tensor>& grads,
                std::vector<bool>& has_grad);
  void accumulate(int idx, const Tensor& g, std::vector<Tensor>& grads,
                  std::vector<bool>& has_grad);
  static void check_finite(const Tensor& t, int node);

  std::vector<Node> nodes_;
  int computed_upto_ = 0;  // nodes [0, computed_upto_) have values
};

// Scaled dot-product attention composed from primitives.
// q:[M,dk] k:[N,dk] v:[N,dv]; optional additive mask [M,N] (constant).
NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v,
                 NodeId mask = NodeId{});

// Finite-difference check of every parameter gradient of a scalar root.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
  int worst_param = -1;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

GradCheckReport grad_check(Graph& g, NodeId root, double eps, double tol);

// Named persistent parameter storage shared across per-step graphs.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_[i]; }
  Tensor& value(size_t i) { return values_[i]; }
  const Tensor& value(size_t i) const { return values_[i]; }
  std::int64_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, size_t> index_;
};

// One graph's view of a ParamSet: every parameter gets a leaf node.
class Bound {
 public:
  Bound(Graph& g, const ParamSet& ps);
  NodeId operator[](const std::string& name) const;
  // Gradients aligned with the ParamSet order; zero tensors where the root
  // did not depend on a parameter.
  std::vector<Tensor> collect(const GradMap& gm) const;
  const ParamSet& params() const { return *ps_; }

 private:
  const ParamSet* ps_;
  std::vector<NodeId> ids_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace composer::num
