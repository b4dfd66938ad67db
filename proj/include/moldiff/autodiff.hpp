//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_AUTODIFF_HPP_
#define MOLDIFF_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "moldiff/errors.hpp"

namespace moldiff::ad {

// Reverse-mode tape over dense row-major 64-bit float matrices. Everything is
// rank-2: scalars are 1x1, vectors are 1xN. Gradient accumulation order is the
// reverse of node creation order, which makes backward() deterministic for a
// fixed forward program.

class Tape;

struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  long rows() const;
  long cols() const;
  long numel() const { return rows() * cols(); }
  std::span<const double> value() const;
  std::span<const double> grad() const;
};

class Tape {
 public:
  struct Node {
    long rows = 0;
    long cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    std::function<void()> backward;  // empty for leaves
  };

  Tensor leaf(long rows, long cols, std::span<const double> data, bool requires_grad);
  Tensor constant(long rows, long cols, std::span<const double> data) {
    return leaf(rows, cols, data, false);
  }
  Tensor zeros(long rows, long cols, bool requires_grad = false);
  Tensor full(long rows, long cols, double fill, bool requires_grad = false);

  // Runs reverse accumulation from a 1x1 loss node.
  void backward(Tensor loss);

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

  // Internal: appends a node and returns its handle.
  Tensor emplace(long rows, long cols, bool requires_grad);
  // Internal: ensures a grad buffer exists (zero-filled) and returns it.
  std::span<double> grad_buffer(int id);

 private:
  std::vector<Node> nodes_;
};

// --- primitive operations ---------------------------------------------------

Tensor matmul(Tensor a, Tensor b, bool trans_a = false, bool trans_b = false);

// Elementwise binaries. The right operand may have the same shape as the
// left, be a 1x1 scalar, a 1xC row (broadcast over rows), or an Rx1 column
// (broadcast over columns). No other broadcasting exists.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor div(Tensor a, Tensor b);

Tensor scale(Tensor a, double s);
Tensor add_scalar(Tensor a, double s);
Tensor neg(Tensor a);

Tensor relu(Tensor a);
Tensor exp(Tensor a);
Tensor log(Tensor a);
Tensor sqrt(Tensor a);

// axis = 0 normalizes down columns, axis = 1 across each row.
Tensor softmax(Tensor a, int axis = 1);
Tensor layernorm(Tensor a, int axis = 1, double eps = 1e-5);

Tensor sum(Tensor a, int axis);
Tensor mean(Tensor a, int axis);
Tensor sum_all(Tensor a);
Tensor mean_all(Tensor a);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(Tensor a, int axis, long start, long len);
Tensor reshape(Tensor a, long rows, long cols);

// Gathers rows of `table` (KxD) by index; gradients scatter-add back.
Tensor embedding(Tensor table, std::span<const int> indices);

// out[i] = mask[i] ? fill : a[i]; gradient is blocked where masked.
Tensor masked_fill(Tensor a, std::span<const uint8_t> mask, double fill);

// Mean over rows of (logsumexp(row) - row[target]). Targets index columns.
Tensor cross_entropy(Tensor logits, std::span<const int> targets);

// --- finite-difference gradient checking ------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_index = -1;
  std::vector<int> excluded;  // coordinates skipped as non-differentiable
  int checked = 0;
  bool pass = false;
};

// Compares an analytic gradient against central finite differences of a pure
// scalar function. Coordinates where the one-sided differences disagree
// (kinks, e.g. relu at exactly 0) are reported as excluded rather than failed.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> point,
                           std::span<const double> analytic_grad,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace moldiff::ad

#endif  // MOLDIFF_AUTODIFF_HPP_
