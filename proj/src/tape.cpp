#include "nbl/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "nbl/kernels.hpp"

namespace nbl::ad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void check_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

bool any_requires(const std::vector<NodePtr>& in) {
  for (const auto& n : in)
    if (n->requires_grad) return true;
  return false;
}

// (rows, cols) view of an array with `axis` as the column dimension and
// everything else flattened into rows, assuming axis is the last or the
// reduction is expressible via strides. We only need the generic case:
// split shape into outer (before axis), axis, inner (after axis).
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Array& a, std::size_t axis) {
  if (axis >= a.rank())
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for " + a.shape_str());
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= a.shape[i];
  v.n = a.shape[axis];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) v.inner *= a.shape[i];
  return v;
}

}  // namespace

NodePtr make_leaf(Array values, bool requires_grad) {
  if (values.has_nan())
    throw std::invalid_argument("make_leaf: NaN in input values");
  auto n = std::make_shared<Node>();
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

NodePtr make_node(Array value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backprop, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->requires_grad = any_requires(n->inputs);
  n->backprop = std::move(backprop);
  n->op = op;
  return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a->value, b->value, "add");
  Array v = a->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v.data[i] += b->value.data[i];
  return make_node(
      std::move(v), {a, b},
      [](Node& n) {
        for (int s = 0; s < 2; ++s) {
          auto& in = n.inputs[s];
          if (!in->requires_grad) continue;
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < g.numel(); ++i)
            g.data[i] += n.grad.data[i];
        }
      },
      "add");
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a->value, b->value, "sub");
  Array v = a->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v.data[i] -= b->value.data[i];
  return make_node(
      std::move(v), {a, b},
      [](Node& n) {
        if (n.inputs[0]->requires_grad) {
          auto& g = n.inputs[0]->ensure_grad();
          for (std::size_t i = 0; i < g.numel(); ++i)
            g.data[i] += n.grad.data[i];
        }
        if (n.inputs[1]->requires_grad) {
          auto& g = n.inputs[1]->ensure_grad();
          for (std::size_t i = 0; i < g.numel(); ++i)
            g.data[i] -= n.grad.data[i];
        }
      },
      "sub");
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a->value, b->value, "mul");
  Array v = a->value;
  for (std::size_t i = 0; i < v.numel(); ++i) v.data[i] *= b->value.data[i];
  return make_node(
      std::move(v), {a, b},
      [](Node& n) {
        const Array& av = n.inputs[0]->value;
        const Array& bv = n.inputs[1]->value;
        if (n.inputs[0]->requires_grad) {
          auto& g = n.inputs[0]->ensure_grad();
          for (std::size_t i = 0; i < g.numel(); ++i)
            g.data[i] += n.grad.data[i] * bv.data[i];
        }
        if (n.inputs[1]->requires_grad) {
          auto& g = n.inputs[1]->ensure_grad();
          for (std::size_t i = 0; i < g.numel(); ++i)
            g.data[i] += n.grad.data[i] * av.data[i];
        }
      },
      "mul");
}

NodePtr scale(const NodePtr& a, double c) {
  Array v = a->value;
  for (auto& x : v.data) x *= c;
  return make_node(
      std::move(v), {a},
      [c](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i)
          g.data[i] += c * n.grad.data[i];
      },
      "scale");
}

NodePtr relu(const NodePtr& a) {
  Array v = a->value;
  for (auto& x : v.data) x = x > 0.0 ? x : 0.0;
  return make_node(
      std::move(v), {a},
      [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        const Array& av = n.inputs[0]->value;
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (av.data[i] > 0.0) g.data[i] += n.grad.data[i];
      },
      "relu");
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Array& av = a->value;
  const Array& bv = b->value;
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: shape mismatch " + av.shape_str() +
                                " x " + bv.shape_str());
  Array v({av.shape[0], bv.shape[1]});
  kern::gemm(av.data.data(), bv.data.data(), v.data.data(), av.shape[0],
             av.shape[1], bv.shape[1], false);
  return make_node(
      std::move(v), {a, b},
      [](Node& n) {
        const Array& av = n.inputs[0]->value;
        const Array& bv = n.inputs[1]->value;
        std::size_t r = av.shape[0], k = av.shape[1], c = bv.shape[1];
        MapC G(n.grad.data.data(), r, c);
        if (n.inputs[0]->requires_grad) {
          auto& ga = n.inputs[0]->ensure_grad();
          MapM GA(ga.data.data(), r, k);
          MapC B(bv.data.data(), k, c);
          GA.noalias() += G * B.transpose();
        }
        if (n.inputs[1]->requires_grad) {
          auto& gb = n.inputs[1]->ensure_grad();
          MapM GB(gb.data.data(), k, c);
          MapC A(av.data.data(), r, k);
          GB.noalias() += A.transpose() * G;
        }
      },
      "matmul");
}

NodePtr transpose(const NodePtr& a) {
  const Array& av = a->value;
  if (av.rank() != 2)
    throw std::invalid_argument("transpose: rank-2 required, got " +
                                av.shape_str());
  Array v({av.shape[1], av.shape[0]});
  for (std::size_t i = 0; i < av.shape[0]; ++i)
    for (std::size_t j = 0; j < av.shape[1]; ++j)
      v.at2(j, i) = av.at2(i, j);
  return make_node(
      std::move(v), {a},
      [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.shape[0]; ++i)
          for (std::size_t j = 0; j < g.shape[1]; ++j)
            g.at2(i, j) += n.grad.at2(j, i);
      },
      "transpose");
}

NodePtr concat(const NodePtr& a, const NodePtr& b, std::size_t axis) {
  const Array& av = a->value;
  const Array& bv = b->value;
  if (av.rank() != bv.rank() || axis >= av.rank())
    throw std::invalid_argument("concat: ranks/axis mismatch " +
                                av.shape_str() + " vs " + bv.shape_str());
  for (std::size_t i = 0; i < av.rank(); ++i)
    if (i != axis && av.shape[i] != bv.shape[i])
      throw std::invalid_argument("concat: shape mismatch " + av.shape_str() +
                                  " vs " + bv.shape_str());
  auto va = axis_view(av, axis);
  auto vb = axis_view(bv, axis);
  std::vector<std::size_t> shape = av.shape;
  shape[axis] += bv.shape[axis];
  Array v(shape);
  std::size_t an = va.n * va.inner, bn = vb.n * vb.inner;
  for (std::size_t o = 0; o < va.outer; ++o) {
    std::copy_n(av.data.data() + o * an, an, v.data.data() + o * (an + bn));
    std::copy_n(bv.data.data() + o * bn, bn,
                v.data.data() + o * (an + bn) + an);
  }
  return make_node(
      std::move(v), {a, b},
      [an, bn, outer = va.outer](Node& n) {
        if (n.inputs[0]->requires_grad) {
          auto& g = n.inputs[0]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < an; ++i)
              g.data[o * an + i] += n.grad.data[o * (an + bn) + i];
        }
        if (n.inputs[1]->requires_grad) {
          auto& g = n.inputs[1]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < bn; ++i)
              g.data[o * bn + i] += n.grad.data[o * (an + bn) + an + i];
        }
      },
      "concat");
}

NodePtr gather_rows(const NodePtr& a, const std::vector<std::size_t>& idx) {
  const Array& av = a->value;
  if (av.rank() != 2)
    throw std::invalid_argument("gather_rows: rank-2 required, got " +
                                av.shape_str());
  std::size_t c = av.shape[1];
  for (auto i : idx)
    if (i >= av.shape[0])
      throw std::out_of_range("gather_rows: index " + std::to_string(i) +
                              " out of range for " + av.shape_str());
  Array v({idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(av.data.data() + idx[r] * c, c, v.data.data() + r * c);
  return make_node(
      std::move(v), {a},
      [idx, c](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < c; ++j)
            g.data[idx[r] * c + j] += n.grad.data[r * c + j];
      },
      "gather_rows");
}

NodePtr gather_cols(const NodePtr& a, const std::vector<std::size_t>& idx) {
  const Array& av = a->value;
  if (av.rank() != 2)
    throw std::invalid_argument("gather_cols: rank-2 required, got " +
                                av.shape_str());
  std::size_t r = av.shape[0], c = av.shape[1];
  for (auto i : idx)
    if (i >= c)
      throw std::out_of_range("gather_cols: index " + std::to_string(i) +
                              " out of range for " + av.shape_str());
  Array v({r, idx.size()});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      v.at2(i, j) = av.at2(i, idx[j]);
  return make_node(
      std::move(v), {a},
      [idx, c](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        std::size_t rows = g.shape[0];
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < idx.size(); ++j)
            g.data[i * c + idx[j]] += n.grad.data[i * idx.size() + j];
      },
      "gather_cols");
}

NodePtr slice_cols(const NodePtr& a, std::size_t from, std::size_t to) {
  const Array& av = a->value;
  if (av.rank() != 2 || from > to || to > av.shape[1])
    throw std::invalid_argument("slice_cols: bad range for " + av.shape_str());
  std::size_t r = av.shape[0], c = av.shape[1], w = to - from;
  Array v({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(av.data.data() + i * c + from, w, v.data.data() + i * w);
  return make_node(
      std::move(v), {a},
      [from, c, w](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        std::size_t rows = g.shape[0];
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < w; ++j)
            g.data[i * c + from + j] += n.grad.data[i * w + j];
      },
      "slice_cols");
}

NodePtr reshape(const NodePtr& a, std::vector<std::size_t> shape) {
  if (Array::numel_of(shape) != a->value.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Array v(shape, a->value.data);
  return make_node(
      std::move(v), {a},
      [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i)
          g.data[i] += n.grad.data[i];
      },
      "reshape");
}

NodePtr add_col_broadcast(const NodePtr& a, const NodePtr& v) {
  const Array& av = a->value;
  const Array& vv = v->value;
  if (av.rank() != 2 || vv.numel() != av.shape[0])
    throw std::invalid_argument("add_col_broadcast: " + av.shape_str() +
                                " with " + vv.shape_str());
  Array out = av;
  for (std::size_t i = 0; i < av.shape[0]; ++i)
    for (std::size_t j = 0; j < av.shape[1]; ++j)
      out.at2(i, j) += vv.data[i];
  return make_node(
      std::move(out), {a, v},
      [](Node& n) {
        std::size_t r = n.value.shape[0], c = n.value.shape[1];
        if (n.inputs[0]->requires_grad) {
          auto& g = n.inputs[0]->ensure_grad();
          for (std::size_t i = 0; i < r * c; ++i)
            g.data[i] += n.grad.data[i];
        }
        if (n.inputs[1]->requires_grad) {
          auto& g = n.inputs[1]->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              g.data[i] += n.grad.data[i * c + j];
        }
      },
      "add_col_broadcast");
}

NodePtr logsumexp(const NodePtr& a, std::size_t axis) {
  const Array& av = a->value;
  auto view = axis_view(av, axis);
  std::vector<std::size_t> shape;
  for (std::size_t i = 0; i < av.rank(); ++i)
    if (i != axis) shape.push_back(av.shape[i]);
  Array v(shape);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      double m = kNegInf;
      for (std::size_t x = 0; x < view.n; ++x)
        m = std::max(m, av.data[(o * view.n + x) * view.inner + in]);
      if (m == kNegInf)
        throw std::domain_error(
            "logsumexp: all-(-inf) slice (undefined distribution)");
      double s = 0.0;
      for (std::size_t x = 0; x < view.n; ++x)
        s += std::exp(av.data[(o * view.n + x) * view.inner + in] - m);
      v.data[o * view.inner + in] = std::log(s) + m;
    }
  return make_node(
      std::move(v), {a},
      [view](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        const Array& av = n.inputs[0]->value;
        for (std::size_t o = 0; o < view.outer; ++o)
          for (std::size_t in = 0; in < view.inner; ++in) {
            double out = n.value.data[o * view.inner + in];
            double go = n.grad.data[o * view.inner + in];
            if (go == 0.0) continue;
            for (std::size_t x = 0; x < view.n; ++x) {
              std::size_t ix = (o * view.n + x) * view.inner + in;
              if (av.data[ix] == kNegInf) continue;
              g.data[ix] += go * std::exp(av.data[ix] - out);
            }
          }
      },
      "logsumexp");
}

NodePtr logsumexp_all(const NodePtr& a) {
  const Array& av = a->value;
  double out = kern::logsumexp(av.data.data(), av.numel());
  if (out == kNegInf)
    throw std::domain_error(
        "logsumexp_all: all-(-inf) input (undefined distribution)");
  return make_node(
      Array::scalar(out), {a},
      [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        const Array& av = n.inputs[0]->value;
        double go = n.grad.data[0], out = n.value.data[0];
        for (std::size_t i = 0; i < av.numel(); ++i) {
          if (av.data[i] == kNegInf) continue;
          g.data[i] += go * std::exp(av.data[i] - out);
        }
      },
      "logsumexp_all");
}

NodePtr log_softmax(const NodePtr& a, std::size_t axis) {
  const Array& av = a->value;
  auto view = axis_view(av, axis);
  Array v = av;
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t in = 0; in < view.inner; ++in) {
      double m = kNegInf;
      for (std::size_t x = 0; x < view.n; ++x)
        m = std::max(m, av.data[(o * view.n + x) * view.inner + in]);
      if (m == kNegInf)
        throw std::domain_error(
            "log_softmax: all-(-inf) slice (undefined distribution)");
      double s = 0.0;
      for (std::size_t x = 0; x < view.n; ++x)
        s += std::exp(av.data[(o * view.n + x) * view.inner + in] - m);
      double lz = std::log(s) + m;
      for (std::size_t x = 0; x < view.n; ++x)
        v.data[(o * view.n + x) * view.inner + in] -= lz;
    }
  return make_node(
      std::move(v), {a},
      [view](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (std::size_t o = 0; o < view.outer; ++o)
          for (std::size_t in = 0; in < view.inner; ++in) {
            double gsum = 0.0;
            for (std::size_t x = 0; x < view.n; ++x)
              gsum += n.grad.data[(o * view.n + x) * view.inner + in];
            for (std::size_t x = 0; x < view.n; ++x) {
              std::size_t ix = (o * view.n + x) * view.inner + in;
              double p = std::exp(n.value.data[ix]);
              g.data[ix] += n.grad.data[ix] - p * gsum;
            }
          }
      },
      "log_softmax");
}

NodePtr sum_all(const NodePtr& a) {
  double s = 0.0;
  for (double x : a->value.data) s += x;
  return make_node(
      Array::scalar(s), {a},
      [](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        auto& g = n.inputs[0]->ensure_grad();
        for (auto& x : g.data) x += n.grad.data[0];
      },
      "sum_all");
}

void backward(const NodePtr& root) {
  if (!root->value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar, got " +
                                root->value.shape_str());
  // iterative post-order topo sort
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && visited.count(node.get())) {
      stack.pop_back();
      continue;
    }
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (!visited.count(child.get()) && child->requires_grad)
        stack.emplace_back(child, 0);
    } else {
      visited.insert(node.get());
      order.push_back(node.get());
      stack.pop_back();
    }
  }
  for (Node* n : order) n->ensure_grad();
  for (Node* n : order)
    std::fill(n->grad.data.begin(), n->grad.data.end(), 0.0);
  root->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop && (*it)->requires_grad) (*it)->backprop(**it);
}

FiniteDiffReport finite_diff_check(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& f,
    const std::vector<Array>& point, double step, double tol) {
  (void)tol;
  std::vector<NodePtr> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(make_leaf(p, true));
  auto root = f(leaves);
  backward(root);

  FiniteDiffReport rep;
  auto eval = [&](const std::vector<Array>& pt) {
    std::vector<NodePtr> ls;
    for (const auto& p : pt) ls.push_back(make_leaf(p, false));
    return f(ls)->value.data[0];
  };
  for (std::size_t li = 0; li < point.size(); ++li) {
    for (std::size_t ci = 0; ci < point[li].numel(); ++ci) {
      std::vector<Array> pt = point;
      pt[li].data[ci] += step;
      double fp = eval(pt);
      pt[li].data[ci] -= 2 * step;
      double fm = eval(pt);
      double fd = (fp - fm) / (2 * step);
      double an = leaves[li]->grad.data[ci];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      double rel = std::abs(fd - an) / denom;
      ++rep.n_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_leaf = li;
        rep.worst_coord = ci;
      }
    }
  }
  return rep;
}

}  // namespace nbl::ad
