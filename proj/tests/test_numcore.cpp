#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "composer/graph.hpp"
#include "composer/rng.hpp"

using namespace composer;
using namespace composer::num;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Keeps random inputs away from the non-smooth points of relu / smooth-L1 so
// central differences stay valid.
Tensor random_tensor_away_from(Rng& rng, std::vector<int> shape, double point,
                               double margin) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (auto& v : t.data)
    if (std::abs(v - point) < margin) v = point + (v >= point ? margin : -margin);
  return t;
}

}  // namespace

TEST_CASE("forward: matmul identity") {
  Graph g;
  NodeId i2 = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Rng rng(7);
  Tensor x = random_tensor(rng, {2, 3});
  NodeId xn = g.param(x);
  NodeId y = g.matmul(i2, xn);
  const Tensor& out = g.forward(y);
  for (int k = 0; k < 6; ++k) CHECK(out[k] == doctest::Approx(x[k]).epsilon(1e-15));
}

TEST_CASE("forward: softmax of zeros is uniform") {
  Graph g;
  NodeId x = g.constant(Tensor({1, 3}, {0, 0, 0}));
  const Tensor& y = g.forward(g.softmax(x));
  for (int k = 0; k < 3; ++k) CHECK(y[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward: matmul hand example") {
  Graph g;
  NodeId a = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  NodeId b = g.constant(Tensor({2, 1}, {1, 1}));
  const Tensor& y = g.forward(g.matmul(a, b));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 7.0);
}

TEST_CASE("forward: shape mismatch raises a structured error") {
  Graph g;
  NodeId a = g.constant(Tensor::zeros({2, 3}));
  NodeId b = g.constant(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(g.matmul(a, b), GraphError);
  CHECK_THROWS_AS(g.add(a, g.constant(Tensor::zeros({3, 2}))), GraphError);
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Graph g;
  Rng rng(3);
  NodeId x = g.param(random_tensor(rng, {4, 5}));
  NodeId root = g.sum(x);
  g.forward(root);
  GradMap gm = g.backward(root);
  const Tensor& dx = gm.at(x);
  for (auto v : dx.data) CHECK(v == 1.0);
}

TEST_CASE("backward: x^2 at x=3 gives 6") {
  Graph g;
  NodeId x = g.param(Tensor::scalar(3.0));
  NodeId root = g.mul(x, x);
  g.forward(root);
  GradMap gm = g.backward(root);
  CHECK(gm.at(x)[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward: cross entropy of softmax equals p - onehot") {
  Graph g;
  NodeId logits = g.param(Tensor({1, 4}, {0.3, -1.2, 0.7, 0.1}));
  NodeId onehot = g.constant(Tensor({1, 4}, {0, 0, 1, 0}));
  NodeId p = g.softmax(logits);
  NodeId root = g.cross_entropy(p, onehot);
  g.forward(root);
  GradMap gm = g.backward(root);
  const Tensor& pv = g.value(p);
  const Tensor& dl = gm.at(logits);
  for (int k = 0; k < 4; ++k) {
    double expected = pv[k] - (k == 2 ? 1.0 : 0.0);
    CHECK(dl[k] == doctest::Approx(expected).epsilon(1e-12));
  }
  auto rep = grad_check(g, root, 1e-5, 1e-4);
  CHECK(rep.pass);
}

TEST_CASE("backward requires forward and a scalar root") {
  Graph g;
  NodeId x = g.param(Tensor({1, 2}, {1, 2}));
  NodeId y = g.scale(x, 2.0);
  CHECK_THROWS_AS(g.backward(y), GraphError);
  g.forward(y);
  CHECK_THROWS_AS(g.backward(y), GraphError);  // non-scalar root
}

TEST_CASE("grad_check: x^2 and constants") {
  Graph g;
  NodeId x = g.param(Tensor::scalar(3.0));
  NodeId root = g.mul(x, x);
  auto rep = grad_check(g, root, 1e-5, 1e-4);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-6);

  Graph g2;
  NodeId y = g2.param(Tensor::scalar(1.5));
  NodeId c = g2.constant(Tensor::scalar(4.0));
  NodeId root2 = g2.sum(g2.mul(c, g2.scalar(0.0)));
  (void)y;
  auto rep2 = grad_check(g2, root2, 1e-5, 1e-4);
  CHECK(rep2.pass);
  CHECK(rep2.max_rel_err == 0.0);
}

TEST_CASE("softmax rows sum to one and lie in (0,1)") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    NodeId x = g.constant(random_tensor(rng, {4, 7}, -6.0, 6.0));
    const Tensor& y = g.forward(g.softmax(x));
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) {
        double v = y.at(r, c);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    NodeId x = g.constant(random_tensor(rng, {3, 16}));
    const Tensor& y = g.forward(g.layer_norm(x));
    for (int r = 0; r < 3; ++r) {
      double m = 0.0;
      for (int c = 0; c < 16; ++c) m += y.at(r, c);
      m /= 16.0;
      CHECK(std::abs(m) <= 1e-10);
      double v = 0.0;
      for (int c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
      v /= 16.0;
      CHECK(std::abs(v - 1.0) <= 1e-8);
    }
  }
}

TEST_CASE("forward is deterministic") {
  auto build = [](Tensor x) {
    Graph g;
    NodeId xn = g.param(std::move(x));
    NodeId w = g.constant(Tensor({3, 3}, {0.1, -0.4, 0.2, 1.0, 0.5, -0.3, 0.7, 0.2, 0.9}));
    NodeId y = g.layer_norm(g.sigmoid(g.matmul(xn, w)));
    Tensor out = g.forward(g.sum(y));
    return out[0];
  };
  Rng rng(17);
  Tensor x = random_tensor(rng, {5, 3});
  double a = build(x);
  double b = build(x);
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

// Property suite: every differentiable op matches central finite differences.
TEST_CASE("gradient property: all op kinds vs finite differences") {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 110; ++seed) {
    Rng rng(derive_seed(99, 1, seed));
    const int op_pick = static_cast<int>(seed % 11);
    Graph g;
    NodeId root{};
    switch (op_pick) {
      case 0: {  // matmul + add
        NodeId a = g.param(random_tensor(rng, {3, 4}));
        NodeId b = g.param(random_tensor(rng, {4, 2}));
        NodeId c = g.param(random_tensor(rng, {3, 2}));
        root = g.sum(g.add(g.matmul(a, b), c));
        break;
      }
      case 1: {  // mul / div (denominator away from 0)
        NodeId a = g.param(random_tensor(rng, {2, 5}));
        Tensor bt = random_tensor(rng, {2, 5});
        for (auto& v : bt.data) v = (v >= 0 ? 1.0 : -1.0) * (std::abs(v) + 0.5);
        NodeId b = g.param(bt);
        root = g.sum(g.div(g.mul(a, a), b));
        break;
      }
      case 2: {  // sigmoid
        NodeId a = g.param(random_tensor(rng, {3, 3}));
        root = g.sum(g.sigmoid(a));
        break;
      }
      case 3: {  // relu away from kink
        NodeId a = g.param(random_tensor_away_from(rng, {4, 4}, 0.0, 1e-2));
        root = g.sum(g.relu(a));
        break;
      }
      case 4: {  // softmax composed with mul
        NodeId a = g.param(random_tensor(rng, {2, 6}));
        NodeId w = g.constant(random_tensor(rng, {2, 6}));
        root = g.sum(g.mul(g.softmax(a), w));
        break;
      }
      case 5: {  // layer norm
        NodeId a = g.param(random_tensor(rng, {2, 8}));
        NodeId w = g.constant(random_tensor(rng, {2, 8}));
        root = g.sum(g.mul(g.layer_norm(a), w));
        break;
      }
      case 6: {  // cross entropy through softmax
        NodeId a = g.param(random_tensor(rng, {2, 5}));
        Tensor t = Tensor::zeros({2, 5});
        t.at(0, rng.uniform_int(5)) = 1.0;
        t.at(1, rng.uniform_int(5)) = 1.0;
        root = g.cross_entropy(g.softmax(a), g.constant(t));
        break;
      }
      case 7: {  // smooth l1 away from |d| == 1
        Tensor a = random_tensor(rng, {3, 3});
        Tensor b = random_tensor(rng, {3, 3});
        for (int k = 0; k < 9; ++k) {
          double d = a[k] - b[k];
          if (std::abs(std::abs(d) - 1.0) < 1e-2) b[k] += 3e-2;
          if (std::abs(a[k] - b[k]) < 1e-2) b[k] += 3e-2;
        }
        NodeId an = g.param(a);
        NodeId bn = g.param(b);
        root = g.smooth_l1(an, bn);
        break;
      }
      case 8: {  // mse + reshape + concat
        NodeId a = g.param(random_tensor(rng, {2, 6}));
        NodeId b = g.param(random_tensor(rng, {2, 6}));
        std::vector<NodeId> parts{a, b};
        NodeId cat = g.concat(parts, 0);
        root = g.mse(g.reshape(cat, {4, 6}), g.constant(random_tensor(rng, {4, 6})));
        break;
      }
      case 9: {  // avg pool
        NodeId a = g.param(random_tensor(rng, {4, 4, 2}));
        NodeId w = g.constant(random_tensor(rng, {2, 2, 2}));
        root = g.sum(g.mul(g.avg_pool2d(a, 2), w));
        break;
      }
      default: {  // upsample + transpose + attention
        NodeId a = g.param(random_tensor(rng, {2, 2, 3}));
        root = g.sum(g.upsample_bilinear2d(a, 2));
        NodeId q = g.param(random_tensor(rng, {3, 4}));
        NodeId k = g.param(random_tensor(rng, {5, 4}));
        NodeId v = g.param(random_tensor(rng, {5, 4}));
        root = g.add(root, g.sum(attention(g, q, k, v)));
        break;
      }
    }
    auto rep = grad_check(g, root, 1e-5, 1e-4);
    if (!rep.pass) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("grad_check rejects bad eps") {
  Graph g;
  NodeId x = g.param(Tensor::scalar(1.0));
  NodeId root = g.mul(x, x);
  CHECK_THROWS(grad_check(g, root, 0.0, 1e-4));
  CHECK_THROWS(grad_check(g, root, 0.1, 1e-4));
}

TEST_CASE("non-finite values are rejected") {
  Graph g;
  NodeId a = g.param(Tensor::scalar(1e308));
  NodeId b = g.param(Tensor::scalar(1e308));
  NodeId c = g.add(a, b);
  CHECK_THROWS_AS(g.forward(c), GraphError);
}

TEST_CASE("min/max against constants") {
  Graph g;
  NodeId x = g.param(Tensor({1, 3}, {-1.0, 0.5, 2.0}));
  const Tensor& hi = g.forward(g.max_const(x, 0.0));
  CHECK(hi[0] == 0.0);
  CHECK(hi[1] == 0.5);
  CHECK(hi[2] == 2.0);
  const Tensor& lo = g.forward(g.min_const(x, 1.0));
  CHECK(lo[0] == -1.0);
  CHECK(lo[1] == 0.5);
  CHECK(lo[2] == 1.0);
}

TEST_CASE("ParamSet binding collects gradients by name") {
  ParamSet ps;
  ps.add("w", Tensor({2, 2}, {1, 2, 3, 4}));
  ps.add("b", Tensor({1, 2}, {0.5, -0.5}));
  Graph g;
  Bound bound(g, ps);
  NodeId root = g.sum(bound["w"]);
  g.forward(root);
  auto grads = bound.collect(g.backward(root));
  REQUIRE(grads.size() == 2);
  for (auto v : grads[0].data) CHECK(v == 1.0);
  for (auto v : grads[1].data) CHECK(v == 0.0);  // untouched param
}
