#include "composer/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace composer::num {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

constexpr double kLnEps = 1e-300;
constexpr double kLayerNormEps = 1e-10;

std::int64_t last_dim(const std::vector<int>& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

void Graph::check_finite(const Tensor& t, int node) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw GraphError(node, "non-finite value produced");
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::param(Tensor t) {
  Node n;
  n.op = Op::Param;
  n.out_shape = t.shape;
  n.val = std::move(t);
  n.has_val = true;
  check_finite(n.val, size());
  return push(std::move(n));
}

NodeId Graph::constant(Tensor t) {
  Node n;
  n.op = Op::Const;
  n.out_shape = t.shape;
  n.val = std::move(t);
  n.has_val = true;
  check_finite(n.val, size());
  return push(std::move(n));
}

const std::vector<int>& Graph::shape_of(NodeId id) const {
  return nodes_.at(id.v).out_shape;
}

bool Graph::is_param(NodeId id) const { return nodes_.at(id.v).op == Op::Param; }

NodeId Graph::matmul(NodeId a, NodeId b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw GraphError(size(), "matmul: incompatible shapes " +
                                 Tensor::zeros(sa).shape_str() + " x " +
                                 Tensor::zeros(sb).shape_str());
  Node n;
  n.op = Op::MatMul;
  n.in = {a.v, b.v};
  n.out_shape = {sa[0], sb[1]};
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const auto& s = shape_of(a);
  if (s.size() != 2) throw GraphError(size(), "transpose: need 2-D input");
  Node n;
  n.op = Op::Transpose;
  n.in = {a.v};
  n.out_shape = {s[1], s[0]};
  return push(std::move(n));
}

static bool scalar_shape(const std::vector<int>& s) {
  return Tensor::numel_of(s) == 1;
}

NodeId Graph::add(NodeId a, NodeId b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (!(sa == sb || scalar_shape(sa) || scalar_shape(sb)))
    throw GraphError(size(), "add: shape mismatch " + Tensor::zeros(sa).shape_str() +
                                 " vs " + Tensor::zeros(sb).shape_str());
  Node n;
  n.op = Op::Add;
  n.in = {a.v, b.v};
  n.out_shape = scalar_shape(sa) ? sb : sa;
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (!(sa == sb || scalar_shape(sa) || scalar_shape(sb)))
    throw GraphError(size(), "sub: shape mismatch " + Tensor::zeros(sa).shape_str() +
                                 " vs " + Tensor::zeros(sb).shape_str());
  Node n;
  n.op = Op::Sub;
  n.in = {a.v, b.v};
  n.out_shape = scalar_shape(sa) ? sb : sa;
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (!(sa == sb || scalar_shape(sa) || scalar_shape(sb)))
    throw GraphError(size(), "mul: shape mismatch " + Tensor::zeros(sa).shape_str() +
                                 " vs " + Tensor::zeros(sb).shape_str());
  Node n;
  n.op = Op::Mul;
  n.in = {a.v, b.v};
  n.out_shape = scalar_shape(sa) ? sb : sa;
  return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (!(sa == sb || scalar_shape(sa) || scalar_shape(sb)))
    throw GraphError(size(), "div: shape mismatch " + Tensor::zeros(sa).shape_str() +
                                 " vs " + Tensor::zeros(sb).shape_str());
  Node n;
  n.op = Op::Div;
  n.in = {a.v, b.v};
  n.out_shape = scalar_shape(sa) ? sb : sa;
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  Node n;
  n.op = Op::Sigmoid;
  n.in = {a.v};
  n.out_shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  Node n;
  n.op = Op::Relu;
  n.in = {a.v};
  n.out_shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  Node n;
  n.op = Op::Softmax;
  n.in = {a.v};
  n.out_shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId a) {
  Node n;
  n.op = Op::LayerNorm;
  n.in = {a.v};
  n.out_shape = shape_of(a);
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId probs, NodeId target) {
  if (shape_of(probs) != shape_of(target))
    throw GraphError(size(), "cross_entropy: shape mismatch");
  Node n;
  n.op = Op::CrossEntropy;
  n.in = {probs.v, target.v};
  n.out_shape = {1};
  return push(std::move(n));
}

NodeId Graph::smooth_l1(NodeId a, NodeId b) {
  if (shape_of(a) != shape_of(b))
    throw GraphError(size(), "smooth_l1: shape mismatch");
  Node n;
  n.op = Op::SmoothL1;
  n.in = {a.v, b.v};
  n.out_shape = {1};
  return push(std::move(n));
}

NodeId Graph::mse(NodeId a, NodeId b) {
  if (shape_of(a) != shape_of(b))
    throw GraphError(size(), "mse: shape mismatch " +
                                 Tensor::zeros(shape_of(a)).shape_str() + " vs " +
                                 Tensor::zeros(shape_of(b)).shape_str());
  Node n;
  n.op = Op::Mse;
  n.in = {a.v, b.v};
  n.out_shape = {1};
  return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> parts, int axis) {
  if (parts.empty()) throw GraphError(size(), "concat: no inputs");
  auto s0 = shape_of(parts[0]);
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw GraphError(size(), "concat: bad axis");
  int total = 0;
  for (auto p : parts) {
    const auto& s = shape_of(p);
    if (s.size() != s0.size()) throw GraphError(size(), "concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != s0[i])
        throw GraphError(size(), "concat: shape mismatch off-axis");
    total += s[axis];
  }
  Node n;
  n.op = Op::Concat;
  for (auto p : parts) n.in.push_back(p.v);
  n.out_shape = s0;
  n.out_shape[axis] = total;
  n.iattr = axis;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != Tensor::numel_of(shape_of(a)))
    throw GraphError(size(), "reshape: element count mismatch");
  Node n;
  n.op = Op::Reshape;
  n.in = {a.v};
  n.out_shape = shape;
  n.shape_attr = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::avg_pool2d(NodeId a, int window) {
  const auto& s = shape_of(a);
  if (s.size() != 3) throw GraphError(size(), "avg_pool2d: need [H,W,C]");
  if (window <= 0 || s[0] % window || s[1] % window)
    throw GraphError(size(), "avg_pool2d: window must divide H and W");
  Node n;
  n.op = Op::AvgPool2d;
  n.in = {a.v};
  n.out_shape = {s[0] / window, s[1] / window, s[2]};
  n.iattr = window;
  return push(std::move(n));
}

NodeId Graph::upsample_bilinear2d(NodeId a, int factor) {
  const auto& s = shape_of(a);
  if (s.size() != 3) throw GraphError(size(), "upsample_bilinear2d: need [H,W,C]");
  if (factor <= 0) throw GraphError(size(), "upsample_bilinear2d: bad factor");
  Node n;
  n.op = Op::UpsampleBilinear2d;
  n.in = {a.v};
  n.out_shape = {s[0] * factor, s[1] * factor, s[2]};
  n.iattr = factor;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.in = {a.v};
  n.out_shape = {1};
  return push(std::move(n));
}

NodeId Graph::max_const(NodeId a, double c) {
  // max(a,c) = relu(a-c)+c
  return add(relu(sub(a, scalar(c))), scalar(c));
}

NodeId Graph::min_const(NodeId a, double c) {
  // min(a,c) = c - relu(c-a)
  return sub(scalar(c), relu(sub(scalar(c), a)));
}

NodeId Graph::maximum(NodeId a, NodeId b) { return add(relu(sub(a, b)), b); }

NodeId Graph::minimum(NodeId a, NodeId b) { return sub(b, relu(sub(b, a))); }

bool Graph::has_value(NodeId id) const { return id.v < computed_upto_; }

const Tensor& Graph::value(NodeId id) const {
  const Node& n = nodes_.at(id.v);
  if (!n.has_val) throw GraphError(id.v, "value requested before forward");
  return n.val;
}

void Graph::set_param_value(NodeId id, const Tensor& t) {
  Node& n = nodes_.at(id.v);
  if (n.op != Op::Param) throw GraphError(id.v, "set_param_value: not a parameter");
  if (t.shape != n.out_shape) throw GraphError(id.v, "set_param_value: shape mismatch");
  n.val = t;
  // Leaves keep their values; every derived node must be recomputed.
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i)
    if (nodes_[i].op != Op::Param && nodes_[i].op != Op::Const)
      nodes_[i].has_val = false;
  computed_upto_ = 0;
}

const Tensor& Graph::forward(NodeId root) {
  if (!root.valid() || root.v >= size()) throw GraphError(root.v, "forward: bad root");
  for (int i = computed_upto_; i <= root.v; ++i)
    if (!nodes_[i].has_val) compute(i);
  computed_upto_ = std::max(computed_upto_, root.v + 1);
  return nodes_[root.v].val;
}

void Graph::compute(int i) {
  Node& n = nodes_[i];
  auto in = [&](int k) -> const Tensor& { return nodes_[n.in[k]].val; };
  switch (n.op) {
    case Op::Const:
    case Op::Param:
      return;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out = Tensor::zeros(n.out_shape);
      MapC ma(a.data.data(), a.rows(), a.cols());
      MapC mb(b.data.data(), b.rows(), b.cols());
      MapM mo(out.data.data(), out.rows(), out.cols());
      mo.noalias() = ma * mb;
      n.val = std::move(out);
      break;
    }
    case Op::Transpose: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.out_shape);
      for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
      n.val = std::move(out);
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out = Tensor::zeros(n.out_shape);
      const bool as = a.is_scalar() && !b.is_scalar();
      const bool bs = b.is_scalar() && !a.is_scalar();
      const std::int64_t m = out.numel();
      for (std::int64_t k = 0; k < m; ++k) {
        double x = as ? a[0] : a[k];
        double y = bs ? b[0] : b[k];
        switch (n.op) {
          case Op::Add: out[k] = x + y; break;
          case Op::Sub: out[k] = x - y; break;
          case Op::Mul: out[k] = x * y; break;
          default: out[k] = x / y; break;
        }
      }
      n.val = std::move(out);
      break;
    }
    case Op::Sigmoid: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.out_shape);
      for (std::int64_t k = 0; k < a.numel(); ++k)
        out[k] = 1.0 / (1.0 + std::exp(-a[k]));
      n.val = std::move(out);
      break;
    }
    case Op::Relu: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.out_shape);
      for (std::int64_t k = 0; k < a.numel(); ++k) out[k] = a[k] > 0.0 ? a[k] : 0.0;
      n.val = std::move(out);
      break;
    }
    case Op::Softmax: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.out_shape);
      const std::int64_t d = last_dim(a.shape);
      const std::int64_t rows = a.numel() / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = a.data.data() + r * d;
        double* y = out.data.data() + r * d;
        double mx = x[0];
        for (std::int64_t c = 1; c < d; ++c) mx = std::max(mx, x[c]);
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
          y[c] = std::exp(x[c] - mx);
          s += y[c];
        }
        for (std::int64_t c = 0; c < d; ++c) y[c] /= s;
      }
      n.val = std::move(out);
      break;
    }
    case Op::LayerNorm: {
      const Tensor& a = in(0);
      Tensor out = Tensor::zeros(n.out_shape);
      const std::int64_t d = last_dim(a.shape);
      const std::int64_t rows = a.numel() / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* x = a.data.data() + r * d;
        double* y = out.data.data() + r * d;
        double m = 0.0;
        for (std::int64_t c = 0; c < d; ++c) m += x[c];
        m /= static_cast<double>(d);
        double v = 0.0;
        for (std::int64_t c = 0; c < d; ++c) v += (x[c] - m) * (x[c] - m);
        v /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(v + kLayerNormEps);
        for (std::int64_t c = 0; c < d; ++c) y[c] = (x[c] - m) * inv;
      }
      n.val = std::move(out);
      break;
    }
    case Op::CrossEntropy: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      double s = 0.0;
      for (std::int64_t k = 0; k < p.numel(); ++k)
        s -= t[k] * std::log(std::max(p[k], kLnEps));
      n.val = Tensor::scalar(s);
      break;
    }
    case Op::SmoothL1: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      double s = 0.0;
      for (std::int64_t k = 0; k < a.numel(); ++k) {
        double d = a[k] - b[k];
        double ad = std::abs(d);
        s += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
      }
      n.val = Tensor::scalar(s);
      break;
    }
    case Op::Mse: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      double s = 0.0;
      for (std::int64_t k = 0; k < a.numel(); ++k) {
        double d = a[k] - b[k];
        s += d * d;
      }
      n.val = Tensor::scalar(s / static_cast<double>(a.numel()));
      break;
    }
    case Op::Concat: {
      const int axis = n.iattr;
      Tensor out = Tensor::zeros(n.out_shape);
      std::int64_t outer = 1, inner = 1;
      for (int d = 0; d < axis; ++d) outer *= n.out_shape[d];
      for (size_t d = axis + 1; d < n.out_shape.size(); ++d) inner *= n.out_shape[d];
      const std::int64_t out_axis = n.out_shape[axis];
      std::int64_t off = 0;
      for (int pi : n.in) {
        const Tensor& part = nodes_[pi].val;
        const std::int64_t pax = part.shape[axis];
        for (std::int64_t o = 0; o < outer; ++o)
          std::copy_n(part.data.data() + o * pax * inner, pax * inner,
                      out.data.data() + (o * out_axis + off) * inner);
        off += pax;
      }
      n.val = std::move(out);
      break;
    }
    case Op::Reshape: {
      Tensor out = in(0);
      out.shape = n.shape_attr;
      n.val = std::move(out);
      break;
    }
    case Op::AvgPool2d: {
      const Tensor& a = in(0);
      const int w = n.iattr;
      const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
      Tensor out = Tensor::zeros(n.out_shape);
      const double invw2 = 1.0 / (static_cast<double>(w) * w);
      for (int ho = 0; ho < H / w; ++ho)
        for (int wo = 0; wo < W / w; ++wo)
          for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int dy = 0; dy < w; ++dy)
              for (int dx = 0; dx < w; ++dx)
                s += a.data[(static_cast<std::int64_t>(ho * w + dy) * W +
                             (wo * w + dx)) * C + c];
            out.data[(static_cast<std::int64_t>(ho) * (W / w) + wo) * C + c] =
                s * invw2;
          }
      n.val = std::move(out);
      break;
    }
    case Op::UpsampleBilinear2d: {
      const Tensor& a = in(0);
      const int f = n.iattr;
      const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
      const int HO = H * f, WO = W * f;
      Tensor out = Tensor::zeros(n.out_shape);
      for (int yo = 0; yo < HO; ++yo) {
        double sy = (yo + 0.5) / f - 0.5;
        int y0 = static_cast<int>(std::floor(sy));
        double wy = sy - y0;
        int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
        for (int xo = 0; xo < WO; ++xo) {
          double sx = (xo + 0.5) / f - 0.5;
          int x0 = static_cast<int>(std::floor(sx));
          double wx = sx - x0;
          int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
          for (int c = 0; c < C; ++c) {
            auto src = [&](int y, int x) {
              return a.data[(static_cast<std::int64_t>(y) * W + x) * C + c];
            };
            double v = (1 - wy) * ((1 - wx) * src(y0c, x0c) + wx * src(y0c, x1c)) +
                       wy * ((1 - wx) * src(y1c, x0c) + wx * src(y1c, x1c));
            out.data[(static_cast<std::int64_t>(yo) * WO + xo) * C + c] = v;
          }
        }
      }
      n.val = std::move(out);
      break;
    }
    case Op::Sum: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (std::int64_t k = 0; k < a.numel(); ++k) s += a[k];
      n.val = Tensor::scalar(s);
      break;
    }
  }
  n.has_val = true;
  check_finite(n.val, i);
}

void Graph::accumulate(int idx, const Tensor& g, std::vector<Tensor>& grads,
                       std::vector<bool>& has_grad) {
  if (!has_grad[idx]) {
    grads[idx] = g;
    has_grad[idx] = true;
  } else {
    Tensor& acc = grads[idx];
    for (std::int64_t k = 0; k < acc.numel(); ++k) acc[k] += g[k];
  }
}

GradMap Graph::backward(NodeId root) {
  if (!root.valid() || root.v >= size()) throw GraphError(root.v, "backward: bad root");
  const Node& rn = nodes_[root.v];
  if (!rn.has_val || root.v >= computed_upto_)
    throw GraphError(root.v, "backward: forward has not been run");
  if (Tensor::numel_of(rn.out_shape) != 1)
    throw GraphError(root.v, "backward: root is not a scalar");

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has_grad(nodes_.size(), false);
  grads[root.v] = Tensor::full(rn.out_shape, 1.0);
  has_grad[root.v] = true;

  for (int i = root.v; i >= 0; --i) {
    if (!has_grad[i]) continue;
    const Node& n = nodes_[i];
    if (n.op == Op::Const || n.op == Op::Param) continue;
    backprop(i, grads[i], grads, has_grad);
  }

  GradMap gm;
  for (int i = 0; i <= root.v; ++i)
    if (nodes_[i].op == Op::Param && has_grad[i]) gm.add(NodeId{i}, std::move(grads[i]));
  return gm;
}

void Graph::backprop(int i, const Tensor& g, std::vector<Tensor>& grads,
                     std::vector<bool>& has_grad) {
  const Node& n = nodes_[i];
  auto inval = [&](int k) -> const Tensor& { return nodes_[n.in[k]].val; };
  auto needs = [&](int k) {
    const Node& m = nodes_[n.in[k]];
    return m.op != Op::Const;  // constants never need gradients
  };
  switch (n.op) {
    case Op::Const:
    case Op::Param:
      return;
    case Op::MatMul: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      if (needs(0)) {
        Tensor da = Tensor::zeros(a.shape);
        MapC mg(g.data.data(), a.rows(), b.cols());
        MapC mb(b.data.data(), b.rows(), b.cols());
        MapM md(da.data.data(), a.rows(), a.cols());
        md.noalias() = mg * mb.transpose();
        accumulate(n.in[0], da, grads, has_grad);
      }
      if (needs(1)) {
        Tensor db = Tensor::zeros(b.shape);
        MapC mg(g.data.data(), a.rows(), b.cols());
        MapC ma(a.data.data(), a.rows(), a.cols());
        MapM md(db.data.data(), b.rows(), b.cols());
        md.noalias() = ma.transpose() * mg;
        accumulate(n.in[1], db, grads, has_grad);
      }
      break;
    }
    case Op::Transpose: {
      if (!needs(0)) break;
      const Tensor& a = inval(0);
      Tensor da = Tensor::zeros(a.shape);
      for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) da.at(r, c) = g.at(c, r);
      accumulate(n.in[0], da, grads, has_grad);
      break;
    }
    case Op::Add:
    case Op::Sub: {
      const double sgn = n.op == Op::Add ? 1.0 : -1.0;
      for (int side = 0; side < 2; ++side) {
        if (!needs(side)) continue;
        const Tensor& x = inval(side);
        const double coeff = side == 0 ? 1.0 : sgn;
        if (x.numel() == g.numel()) {
          Tensor dx = Tensor::zeros(x.shape);
          for (std::int64_t k = 0; k < g.numel(); ++k) dx[k] = coeff * g[k];
          accumulate(n.in[side], dx, grads, has_grad);
        } else {  // scalar side
          double s = 0.0;
          for (std::int64_t k = 0; k < g.numel(); ++k) s += g[k];
          accumulate(n.in[side], Tensor::full(x.shape, coeff * s), grads, has_grad);
        }
      }
      break;
    }
    case Op::Mul: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      const bool as = a.is_scalar() && !b.is_scalar();
      const bool bs = b.is_scalar() && !a.is_scalar();
      if (needs(0)) {
        if (as) {
          double s = 0.0;
          for (std::int64_t k = 0; k < g.numel(); ++k) s += g[k] * b[k];
          accumulate(n.in[0], Tensor::full(a.shape, s), grads, has_grad);
        } else {
          Tensor da = Tensor::zeros(a.shape);
          for (std::int64_t k = 0; k < g.numel(); ++k)
            da[k] = g[k] * (bs ? b[0] : b[k]);
          accumulate(n.in[0], da, grads, has_grad);
        }
      }
      if (needs(1)) {
        if (bs) {
          double s = 0.0;
          for (std::int64_t k = 0; k < g.numel(); ++k) s += g[k] * a[k];
          accumulate(n.in[1], Tensor::full(b.shape, s), grads, has_grad);
        } else {
          Tensor db = Tensor::zeros(b.shape);
          for (std::int64_t k = 0; k < g.numel(); ++k)
            db[k] = g[k] * (as ? a[0] : a[k]);
          accumulate(n.in[1], db, grads, has_grad);
        }
      }
      break;
    }
    case Op::Div: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      const bool as = a.is_scalar() && !b.is_scalar();
      const bool bs = b.is_scalar() && !a.is_scalar();
      if (needs(0)) {
        if (as) {
          double s = 0.0;
          for (std::int64_t k = 0; k < g.numel(); ++k) s += g[k] / b[k];
          accumulate(n.in[0], Tensor::full(a.shape, s), grads, has_grad);
        } else {
          Tensor da = Tensor::zeros(a.shape);
          for (std::int64_t k = 0; k < g.numel(); ++k)
            da[k] = g[k] / (bs ? b[0] : b[k]);
          accumulate(n.in[0], da, grads, has_grad);
        }
      }
      if (needs(1)) {
        if (bs) {
          double s = 0.0;
          for (std::int64_t k = 0; k < g.numel(); ++k) {
            double bv = b[0];
            s += -g[k] * a[k] / (bv * bv);
          }
          accumulate(n.in[1], Tensor::full(b.shape, s), grads, has_grad);
        } else {
          Tensor db = Tensor::zeros(b.shape);
          for (std::int64_t k = 0; k < g.numel(); ++k) {
            double av = as ? a[0] : a[k];
            db[k] = -g[k] * av / (b[k] * b[k]);
          }
          accumulate(n.in[1], db, grads, has_grad);
        }
      }
      break;
    }
    case Op::Sigmoid: {
      if (!needs(0)) break;
      const Tensor& y = n.val;
      Tensor dx = Tensor::zeros(y.shape);
      for (std::int64_t k = 0; k < y.numel(); ++k)
        dx[k] = g[k] * y[k] * (1.0 - y[k]);
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::Relu: {
      if (!needs(0)) break;
      const Tensor& x = inval(0);
      Tensor dx = Tensor::zeros(x.shape);
      for (std::int64_t k = 0; k < x.numel(); ++k) dx[k] = x[k] > 0.0 ? g[k] : 0.0;
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::Softmax: {
      if (!needs(0)) break;
      const Tensor& y = n.val;
      Tensor dx = Tensor::zeros(y.shape);
      const std::int64_t d = last_dim(y.shape);
      const std::int64_t rows = y.numel() / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* yr = y.data.data() + r * d;
        const double* gr = g.data.data() + r * d;
        double dot = 0.0;
        for (std::int64_t c = 0; c < d; ++c) dot += gr[c] * yr[c];
        double* dr = dx.data.data() + r * d;
        for (std::int64_t c = 0; c < d; ++c) dr[c] = yr[c] * (gr[c] - dot);
      }
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::LayerNorm: {
      if (!needs(0)) break;
      const Tensor& x = inval(0);
      const Tensor& y = n.val;
      Tensor dx = Tensor::zeros(x.shape);
      const std::int64_t d = last_dim(x.shape);
      const std::int64_t rows = x.numel() / d;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * d;
        const double* yr = y.data.data() + r * d;
        const double* gr = g.data.data() + r * d;
        double m = 0.0;
        for (std::int64_t c = 0; c < d; ++c) m += xr[c];
        m /= static_cast<double>(d);
        double v = 0.0;
        for (std::int64_t c = 0; c < d; ++c) v += (xr[c] - m) * (xr[c] - m);
        v /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(v + kLayerNormEps);
        double gm = 0.0, gym = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
          gm += gr[c];
          gym += gr[c] * yr[c];
        }
        gm /= static_cast<double>(d);
        gym /= static_cast<double>(d);
        double* dr = dx.data.data() + r * d;
        for (std::int64_t c = 0; c < d; ++c)
          dr[c] = inv * (gr[c] - gm - yr[c] * gym);
      }
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::CrossEntropy: {
      const Tensor& p = inval(0);
      const Tensor& t = inval(1);
      const double gs = g[0];
      if (needs(0)) {
        Tensor dp = Tensor::zeros(p.shape);
        for (std::int64_t k = 0; k < p.numel(); ++k)
          dp[k] = -gs * t[k] / std::max(p[k], kLnEps);
        accumulate(n.in[0], dp, grads, has_grad);
      }
      if (needs(1)) {
        Tensor dt = Tensor::zeros(t.shape);
        for (std::int64_t k = 0; k < t.numel(); ++k)
          dt[k] = -gs * std::log(std::max(p[k], kLnEps));
        accumulate(n.in[1], dt, grads, has_grad);
      }
      break;
    }
    case Op::SmoothL1: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      const double gs = g[0];
      Tensor da = Tensor::zeros(a.shape);
      for (std::int64_t k = 0; k < a.numel(); ++k) {
        double d = a[k] - b[k];
        da[k] = gs * (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0));
      }
      if (needs(1)) {
        Tensor db = Tensor::zeros(b.shape);
        for (std::int64_t k = 0; k < a.numel(); ++k) db[k] = -da[k];
        accumulate(n.in[1], db, grads, has_grad);
      }
      if (needs(0)) accumulate(n.in[0], da, grads, has_grad);
      break;
    }
    case Op::Mse: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      const double gs = 2.0 * g[0] / static_cast<double>(a.numel());
      if (needs(0)) {
        Tensor da = Tensor::zeros(a.shape);
        for (std::int64_t k = 0; k < a.numel(); ++k) da[k] = gs * (a[k] - b[k]);
        accumulate(n.in[0], da, grads, has_grad);
      }
      if (needs(1)) {
        Tensor db = Tensor::zeros(b.shape);
        for (std::int64_t k = 0; k < a.numel(); ++k) db[k] = -gs * (a[k] - b[k]);
        accumulate(n.in[1], db, grads, has_grad);
      }
      break;
    }
    case Op::Concat: {
      const int axis = n.iattr;
      std::int64_t outer = 1, inner = 1;
      for (int d = 0; d < axis; ++d) outer *= n.out_shape[d];
      for (size_t d = axis + 1; d < n.out_shape.size(); ++d) inner *= n.out_shape[d];
      const std::int64_t out_axis = n.out_shape[axis];
      std::int64_t off = 0;
      for (size_t pi = 0; pi < n.in.size(); ++pi) {
        const Tensor& part = nodes_[n.in[pi]].val;
        const std::int64_t pax = part.shape[axis];
        if (needs(static_cast<int>(pi))) {
          Tensor dp = Tensor::zeros(part.shape);
          for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(g.data.data() + (o * out_axis + off) * inner, pax * inner,
                        dp.data.data() + o * pax * inner);
          accumulate(n.in[pi], dp, grads, has_grad);
        }
        off += pax;
      }
      break;
    }
    case Op::Reshape: {
      if (!needs(0)) break;
      Tensor dx = g;
      dx.shape = inval(0).shape;
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::AvgPool2d: {
      if (!needs(0)) break;
      const Tensor& a = inval(0);
      const int w = n.iattr;
      const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
      Tensor dx = Tensor::zeros(a.shape);
      const double invw2 = 1.0 / (static_cast<double>(w) * w);
      for (int ho = 0; ho < H / w; ++ho)
        for (int wo = 0; wo < W / w; ++wo)
          for (int c = 0; c < C; ++c) {
            double gv = g.data[(static_cast<std::int64_t>(ho) * (W / w) + wo) * C + c] *
                        invw2;
            for (int dy = 0; dy < w; ++dy)
              for (int dx_ = 0; dx_ < w; ++dx_)
                dx.data[(static_cast<std::int64_t>(ho * w + dy) * W +
                         (wo * w + dx_)) * C + c] += gv;
          }
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::UpsampleBilinear2d: {
      if (!needs(0)) break;
      const Tensor& a = inval(0);
      const int f = n.iattr;
      const int H = a.shape[0], W = a.shape[1], C = a.shape[2];
      const int HO = H * f, WO = W * f;
      Tensor dx = Tensor::zeros(a.shape);
      for (int yo = 0; yo < HO; ++yo) {
        double sy = (yo + 0.5) / f - 0.5;
        int y0 = static_cast<int>(std::floor(sy));
        double wy = sy - y0;
        int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
        for (int xo = 0; xo < WO; ++xo) {
          double sx = (xo + 0.5) / f - 0.5;
          int x0 = static_cast<int>(std::floor(sx));
          double wx = sx - x0;
          int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
          for (int c = 0; c < C; ++c) {
            double gv = g.data[(static_cast<std::int64_t>(yo) * WO + xo) * C + c];
            auto dst = [&](int y, int x) -> double& {
              return dx.data[(static_cast<std::int64_t>(y) * W + x) * C + c];
            };
            dst(y0c, x0c) += gv * (1 - wy) * (1 - wx);
            dst(y0c, x1c) += gv * (1 - wy) * wx;
            dst(y1c, x0c) += gv * wy * (1 - wx);
            dst(y1c, x1c) += gv * wy * wx;
          }
        }
      }
      accumulate(n.in[0], dx, grads, has_grad);
      break;
    }
    case Op::Sum: {
      if (!needs(0)) break;
      const Tensor& a = inval(0);
      accumulate(n.in[0], Tensor::full(a.shape, g[0]), grads, has_grad);
      break;
    }
  }
}

NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v, NodeId mask) {
  const int dk = g.shape_of(q).at(1);
  NodeId scores = g.matmul(q, g.transpose(k));
  scores = g.scale(scores, 1.0 / std::sqrt(static_cast<double>(dk)));
  if (mask.valid()) scores = g.add(scores, mask);
  return g.matmul(g.softmax(scores), v);
}

GradCheckReport grad_check(Graph& g, NodeId root, double eps, double tol) {
  if (eps <= 0.0 || eps > 1e-2) throw std::invalid_argument("grad_check: eps out of range");
  g.forward(root);
  GradMap analytic = g.backward(root);

  GradCheckReport rep;
  rep.tol = tol;
  for (int i = 0; i <= root.v; ++i) {
    NodeId id{i};
    if (!g.is_param(id)) continue;
    Tensor base = g.value(id);
    const Tensor* ga = analytic.contains(id) ? &analytic.at(id) : nullptr;
    for (std::int64_t k = 0; k < base.numel(); ++k) {
      Tensor t = base;
      t[k] = base[k] + eps;
      g.set_param_value(id, t);
      double fp = g.forward(root)[0];
      t[k] = base[k] - eps;
      g.set_param_value(id, t);
      double fm = g.forward(root)[0];
      double numeric = (fp - fm) / (2.0 * eps);
      double a = ga ? (*ga)[k] : 0.0;
      double rel = std::abs(a - numeric) /
                   std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = i;
        rep.worst_index = k;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
    g.set_param_value(id, base);
  }
  g.forward(root);
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

Tensor& ParamSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate " + name);
  index_[name] = names_.size();
  names_.push_back(name);
  values_.push_back(std::move(init));
  return values_.back();
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: missing " + name);
  return values_[it->second];
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: missing " + name);
  return values_[it->second];
}

std::int64_t ParamSet::total_elements() const {
  std::int64_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

Bound::Bound(Graph& g, const ParamSet& ps) : ps_(&ps) {
  ids_.reserve(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    ids_.push_back(g.param(ps.value(i)));
    index_[ps.name(i)] = i;
  }
}

NodeId Bound::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("Bound: missing " + name);
  return ids_[it->second];
}

std::vector<Tensor> Bound::collect(const GradMap& gm) const {
  std::vector<Tensor> out;
  out.reserve(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (gm.contains(ids_[i]))
      out.push_back(gm.at(ids_[i]));
    else
      out.push_back(Tensor::zeros(ps_->value(i).shape));
  }
  return out;
}

}  // namespace composer::num
