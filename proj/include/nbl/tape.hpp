#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nbl/array.hpp"

// Define-by-run reverse-mode autodiff over Array values. The tape is the
// graph of Nodes itself; it is rebuilt on every forward pass. A node's
// grad has the shape of its value and is zero until backward runs.
namespace nbl::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Array value;
  Array grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  // pulls from this->grad and accumulates into inputs' grads
  std::function<void(Node&)> backprop;
  const char* op = "leaf";

  Array& ensure_grad() {
    if (grad.shape != value.shape || grad.data.size() != value.data.size())
      grad = Array(value.shape);
    return grad;
  }
};

NodePtr make_leaf(Array values, bool requires_grad = false);
NodePtr make_node(Array value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backprop, const char* op);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);  // elementwise
NodePtr scale(const NodePtr& a, double c);
NodePtr relu(const NodePtr& a);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose(const NodePtr& a);
NodePtr concat(const NodePtr& a, const NodePtr& b, std::size_t axis);
NodePtr gather_rows(const NodePtr& a, const std::vector<std::size_t>& idx);
NodePtr gather_cols(const NodePtr& a, const std::vector<std::size_t>& idx);
NodePtr slice_cols(const NodePtr& a, std::size_t from, std::size_t to);
NodePtr reshape(const NodePtr& a, std::vector<std::size_t> shape);
// a[r x c] + v broadcast: v is [r] (one value per row, added to each column)
NodePtr add_col_broadcast(const NodePtr& a, const NodePtr& v);
NodePtr logsumexp(const NodePtr& a, std::size_t axis);  // removes the axis
NodePtr logsumexp_all(const NodePtr& a);                // -> scalar
NodePtr log_softmax(const NodePtr& a, std::size_t axis);
NodePtr sum_all(const NodePtr& a);  // linear-space sum -> scalar

// Reverse accumulation from a scalar root. Clears grads reachable from
// the root first, so repeated calls do not mix runs.
void backward(const NodePtr& root);

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_coord = 0;
  std::size_t n_checked = 0;
};

// Central-difference check of backward() against f evaluated at `point`.
// f receives freshly built leaves each call and returns a scalar node.
FiniteDiffReport finite_diff_check(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& f,
    const std::vector<Array>& point, double step, double tol);

}  // namespace nbl::ad
