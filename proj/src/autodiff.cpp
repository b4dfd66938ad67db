//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace moldiff::ad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const Tape::Node& n) { return ConstMatMap(n.value.data(), n.rows, n.cols); }

[[noreturn]] void shape_mismatch(const std::string& op, const Tape::Node& a) {
  throw numerical_error("shape mismatch in " + op + " (" + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + ")");
}

void check_same_tape(Tensor a, Tensor b) {
  if (a.tape != b.tape) throw numerical_error("operands belong to different tapes");
}

// Broadcast pattern of operand b against operand a.
enum class Bcast { kSame, kScalar, kRow, kCol };

Bcast classify(const Tape::Node& a, const Tape::Node& b, const char* op) {
  if (a.rows == b.rows && a.cols == b.cols) return Bcast::kSame;
  if (b.rows == 1 && b.cols == 1) return Bcast::kScalar;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::kRow;
  if (b.cols == 1 && b.rows == a.rows) return Bcast::kCol;
  throw numerical_error(std::string("shape mismatch in ") + op + ": " + std::to_string(a.rows) +
                        "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                        std::to_string(b.cols));
}

double bvalue(const Tape::Node& b, Bcast mode, long r, long c) {
  switch (mode) {
    case Bcast::kSame: return b.value[static_cast<size_t>(r * b.cols + c)];
    case Bcast::kScalar: return b.value[0];
    case Bcast::kRow: return b.value[static_cast<size_t>(c)];
    case Bcast::kCol: return b.value[static_cast<size_t>(r)];
  }
  return 0.0;
}

// Accumulates a full-shape gradient contribution into b under its broadcast.
void scatter_b(Tape& t, int b_id, Bcast mode, long rows, long cols,
               const std::function<double(long, long)>& g) {
  auto gb = t.grad_buffer(b_id);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      const double v = g(r, c);
      switch (mode) {
        case Bcast::kSame: gb[static_cast<size_t>(r * cols + c)] += v; break;
        case Bcast::kScalar: gb[0] += v; break;
        case Bcast::kRow: gb[static_cast<size_t>(c)] += v; break;
        case Bcast::kCol: gb[static_cast<size_t>(r)] += v; break;
      }
    }
  }
}

}  // namespace

long Tensor::rows() const { return tape->node(id).rows; }
long Tensor::cols() const { return tape->node(id).cols; }

std::span<const double> Tensor::value() const {
  const auto& n = tape->node(id);
  return {n.value.data(), n.value.size()};
}

std::span<const double> Tensor::grad() const {
  const auto& n = tape->node(id);
  return {n.grad.data(), n.grad.size()};
}

Tensor Tape::emplace(long rows, long cols, bool requires_grad) {
  if (rows <= 0 || cols <= 0) throw numerical_error("tensor dimensions must be positive");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value.assign(static_cast<size_t>(rows * cols), 0.0);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::leaf(long rows, long cols, std::span<const double> data, bool requires_grad) {
  if (static_cast<long>(data.size()) != rows * cols)
    throw numerical_error("leaf: data size does not match shape");
  Tensor t = emplace(rows, cols, requires_grad);
  std::copy(data.begin(), data.end(), node(t.id).value.begin());
  return t;
}

Tensor Tape::zeros(long rows, long cols, bool requires_grad) {
  return emplace(rows, cols, requires_grad);
}

Tensor Tape::full(long rows, long cols, double fill, bool requires_grad) {
  Tensor t = emplace(rows, cols, requires_grad);
  std::fill(node(t.id).value.begin(), node(t.id).value.end(), fill);
  return t;
}

std::span<double> Tape::grad_buffer(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return {n.grad.data(), n.grad.size()};
}

void Tape::backward(Tensor loss) {
  if (loss.tape != this) throw numerical_error("backward: loss from another tape");
  const Node& l = node(loss.id);
  if (l.rows != 1 || l.cols != 1) throw numerical_error("backward: loss must be 1x1");
  if (!std::isfinite(l.value[0])) throw numerical_error("backward: loss is not finite");
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.grad.empty() && n.backward) n.backward();
  }
}

namespace {

// Shorthand for defining an op: result node plus captured backward closure.
// Parents must be captured by id; the node vector may reallocate later.
Tensor make_unary(Tensor a, long rows, long cols,
                  const std::function<void(const Tape::Node&, Tape::Node&)>& fwd,
                  std::function<void(Tape&, int, int)> bwd) {
  Tape& t = *a.tape;
  Tensor out = t.emplace(rows, cols, t.node(a.id).requires_grad);
  fwd(t.node(a.id), t.node(out.id));
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, out_id, bwd = std::move(bwd)]() {
      if (tp->node(a_id).requires_grad) bwd(*tp, a_id, out_id);
    };
  }
  return out;
}

}  // namespace

Tensor matmul(Tensor a, Tensor b, bool trans_a, bool trans_b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const auto& na = t.node(a.id);
  const auto& nb = t.node(b.id);
  const long m = trans_a ? na.cols : na.rows;
  const long k = trans_a ? na.rows : na.cols;
  const long k2 = trans_b ? nb.cols : nb.rows;
  const long n = trans_b ? nb.rows : nb.cols;
  if (k != k2) shape_mismatch("matmul", na);

  Tensor out = t.emplace(m, n, na.requires_grad || nb.requires_grad);
  {
    auto& no = t.node(out.id);
    MatMap o(no.value.data(), m, n);
    ConstMatMap ma = as_mat(t.node(a.id));
    ConstMatMap mb = as_mat(t.node(b.id));
    if (!trans_a && !trans_b) o.noalias() = ma * mb;
    else if (trans_a && !trans_b) o.noalias() = ma.transpose() * mb;
    else if (!trans_a && trans_b) o.noalias() = ma * mb.transpose();
    else o.noalias() = ma.transpose() * mb.transpose();
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, b_id = b.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, b_id, out_id, trans_a, trans_b]() {
      const auto& no = tp->node(out_id);
      ConstMatMap g(no.grad.data(), no.rows, no.cols);
      if (tp->node(a_id).requires_grad) {
        auto ga = tp->grad_buffer(a_id);
        MatMap da(ga.data(), tp->node(a_id).rows, tp->node(a_id).cols);
        ConstMatMap mb = as_mat(tp->node(b_id));
        if (!trans_a && !trans_b) da.noalias() += g * mb.transpose();
        else if (!trans_a && trans_b) da.noalias() += g * mb;
        else if (trans_a && !trans_b) da.noalias() += mb * g.transpose();
        else da.noalias() += mb.transpose() * g.transpose();
      }
      if (tp->node(b_id).requires_grad) {
        auto gb = tp->grad_buffer(b_id);
        MatMap db(gb.data(), tp->node(b_id).rows, tp->node(b_id).cols);
        ConstMatMap ma = as_mat(tp->node(a_id));
        if (!trans_a && !trans_b) db.noalias() += ma.transpose() * g;
        else if (!trans_a && trans_b) db.noalias() += g.transpose() * ma;
        else if (trans_a && !trans_b) db.noalias() += ma * g;
        else db.noalias() += g.transpose() * ma.transpose();
      }
    };
  }
  return out;
}

namespace {

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(Tensor a, Tensor b, BinOp op, const char* name) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const auto& na = t.node(a.id);
  const auto& nb = t.node(b.id);
  const Bcast mode = classify(na, nb, name);
  const long rows = na.rows, cols = na.cols;
  Tensor out = t.emplace(rows, cols, na.requires_grad || nb.requires_grad);
  {
    auto& no = t.node(out.id);
    const auto& va = t.node(a.id);
    const auto& vb = t.node(b.id);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) {
        const double x = va.value[static_cast<size_t>(r * cols + c)];
        const double y = bvalue(vb, mode, r, c);
        double v = 0.0;
        switch (op) {
          case BinOp::kAdd: v = x + y; break;
          case BinOp::kSub: v = x - y; break;
          case BinOp::kMul: v = x * y; break;
          case BinOp::kDiv: v = x / y; break;
        }
        no.value[static_cast<size_t>(r * cols + c)] = v;
      }
    }
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, b_id = b.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, b_id, out_id, mode, op, rows, cols]() {
      const auto& no = tp->node(out_id);
      const auto& na2 = tp->node(a_id);
      const auto& nb2 = tp->node(b_id);
      auto g = [&](long r, long c) { return no.grad[static_cast<size_t>(r * cols + c)]; };
      if (na2.requires_grad) {
        auto ga = tp->grad_buffer(a_id);
        for (long r = 0; r < rows; ++r) {
          for (long c = 0; c < cols; ++c) {
            double d = g(r, c);
            if (op == BinOp::kMul) d *= bvalue(nb2, mode, r, c);
            else if (op == BinOp::kDiv) d /= bvalue(nb2, mode, r, c);
            ga[static_cast<size_t>(r * cols + c)] += d;
          }
        }
      }
      if (nb2.requires_grad) {
        scatter_b(*tp, b_id, mode, rows, cols, [&](long r, long c) {
          const double gv = g(r, c);
          switch (op) {
            case BinOp::kAdd: return gv;
            case BinOp::kSub: return -gv;
            case BinOp::kMul: return gv * na2.value[static_cast<size_t>(r * cols + c)];
            case BinOp::kDiv: {
              const double y = bvalue(nb2, mode, r, c);
              return -gv * na2.value[static_cast<size_t>(r * cols + c)] / (y * y);
            }
          }
          return 0.0;
        });
      }
    };
  }
  return out;
}

}  // namespace

Tensor add(Tensor a, Tensor b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(Tensor a, Tensor b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(Tensor a, Tensor b) { return binary(a, b, BinOp::kMul, "mul"); }
Tensor div(Tensor a, Tensor b) { return binary(a, b, BinOp::kDiv, "div"); }

Tensor scale(Tensor a, double s) {
  return make_unary(
      a, a.rows(), a.cols(),
      [s](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = x.value[i] * s;
      },
      [s](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * s;
      });
}

Tensor add_scalar(Tensor a, double s) {
  return make_unary(
      a, a.rows(), a.cols(),
      [s](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = x.value[i] + s;
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      });
}

Tensor neg(Tensor a) { return scale(a, -1.0); }

Tensor relu(Tensor a) {
  return make_unary(
      a, a.rows(), a.cols(),
      [](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = x.value[i] > 0.0 ? x.value[i] : 0.0;
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& xa = t.node(a_id).value;
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i)
          if (xa[i] > 0.0) ga[i] += go[i];
      });
}

Tensor exp(Tensor a) {
  return make_unary(
      a, a.rows(), a.cols(),
      [](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = std::exp(x.value[i]);
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& no = t.node(out_id);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += no.grad[i] * no.value[i];
      });
}

Tensor log(Tensor a) {
  return make_unary(
      a, a.rows(), a.cols(),
      [](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = std::log(x.value[i]);
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& xa = t.node(a_id).value;
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] / xa[i];
      });
}

Tensor sqrt(Tensor a) {
  return make_unary(
      a, a.rows(), a.cols(),
      [](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = std::sqrt(x.value[i]);
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& no = t.node(out_id);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += no.grad[i] * 0.5 / no.value[i];
      });
}

namespace {

// Iterates the lanes of a matrix along `axis`: axis=1 yields rows, axis=0
// yields columns. Applies fn(base_index, stride, count).
void for_each_lane(long rows, long cols, int axis,
                   const std::function<void(long, long, long)>& fn) {
  if (axis == 1) {
    for (long r = 0; r < rows; ++r) fn(r * cols, 1, cols);
  } else if (axis == 0) {
    for (long c = 0; c < cols; ++c) fn(c, cols, rows);
  } else {
    throw numerical_error("axis must be 0 or 1");
  }
}

}  // namespace

Tensor softmax(Tensor a, int axis) {
  Tape& t = *a.tape;
  const long rows = a.rows(), cols = a.cols();
  Tensor out = t.emplace(rows, cols, t.node(a.id).requires_grad);
  {
    const auto& xa = t.node(a.id).value;
    auto& vo = t.node(out.id).value;
    for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
      double mx = -std::numeric_limits<double>::infinity();
      for (long i = 0; i < count; ++i) mx = std::max(mx, xa[static_cast<size_t>(base + i * stride)]);
      if (!std::isfinite(mx)) throw numerical_error("softmax: non-finite input lane");
      double total = 0.0;
      for (long i = 0; i < count; ++i) {
        const double e = std::exp(xa[static_cast<size_t>(base + i * stride)] - mx);
        vo[static_cast<size_t>(base + i * stride)] = e;
        total += e;
      }
      for (long i = 0; i < count; ++i) vo[static_cast<size_t>(base + i * stride)] /= total;
    });
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, out_id, rows, cols, axis]() {
      if (!tp->node(a_id).requires_grad) return;
      auto ga = tp->grad_buffer(a_id);
      const auto& no = tp->node(out_id);
      for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
        double dot = 0.0;
        for (long i = 0; i < count; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          dot += no.grad[k] * no.value[k];
        }
        for (long i = 0; i < count; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          ga[k] += no.value[k] * (no.grad[k] - dot);
        }
      });
    };
  }
  return out;
}

Tensor layernorm(Tensor a, int axis, double eps) {
  Tape& t = *a.tape;
  const long rows = a.rows(), cols = a.cols();
  Tensor out = t.emplace(rows, cols, t.node(a.id).requires_grad);
  // Inverse standard deviations are needed again in backward; stash them.
  auto inv_sigma = std::make_shared<std::vector<double>>();
  {
    const auto& xa = t.node(a.id).value;
    auto& vo = t.node(out.id).value;
    for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
      double mu = 0.0;
      for (long i = 0; i < count; ++i) mu += xa[static_cast<size_t>(base + i * stride)];
      mu /= static_cast<double>(count);
      double var = 0.0;
      for (long i = 0; i < count; ++i) {
        const double d = xa[static_cast<size_t>(base + i * stride)] - mu;
        var += d * d;
      }
      var /= static_cast<double>(count);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_sigma->push_back(is);
      for (long i = 0; i < count; ++i) {
        const size_t k = static_cast<size_t>(base + i * stride);
        vo[k] = (xa[k] - mu) * is;
      }
    });
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, out_id, rows, cols, axis, inv_sigma]() {
      if (!tp->node(a_id).requires_grad) return;
      auto ga = tp->grad_buffer(a_id);
      const auto& no = tp->node(out_id);
      long lane = 0;
      for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
        const double is = (*inv_sigma)[static_cast<size_t>(lane++)];
        double g_mean = 0.0, gy_mean = 0.0;
        for (long i = 0; i < count; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          g_mean += no.grad[k];
          gy_mean += no.grad[k] * no.value[k];
        }
        g_mean /= static_cast<double>(count);
        gy_mean /= static_cast<double>(count);
        for (long i = 0; i < count; ++i) {
          const size_t k = static_cast<size_t>(base + i * stride);
          ga[k] += is * (no.grad[k] - g_mean - no.value[k] * gy_mean);
        }
      });
    };
  }
  return out;
}

namespace {

Tensor reduce(Tensor a, int axis, bool take_mean) {
  Tape& t = *a.tape;
  const long rows = a.rows(), cols = a.cols();
  const long out_rows = axis == 0 ? 1 : rows;
  const long out_cols = axis == 0 ? cols : 1;
  const double denom = take_mean ? static_cast<double>(axis == 0 ? rows : cols) : 1.0;
  Tensor out = t.emplace(out_rows, out_cols, t.node(a.id).requires_grad);
  {
    const auto& xa = t.node(a.id).value;
    auto& vo = t.node(out.id).value;
    long lane = 0;
    for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
      double s = 0.0;
      for (long i = 0; i < count; ++i) s += xa[static_cast<size_t>(base + i * stride)];
      vo[static_cast<size_t>(lane++)] = s / denom;
    });
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, out_id, rows, cols, axis, denom]() {
      if (!tp->node(a_id).requires_grad) return;
      auto ga = tp->grad_buffer(a_id);
      const auto& go = tp->node(out_id).grad;
      long lane = 0;
      for_each_lane(rows, cols, axis, [&](long base, long stride, long count) {
        const double g = go[static_cast<size_t>(lane++)] / denom;
        for (long i = 0; i < count; ++i) ga[static_cast<size_t>(base + i * stride)] += g;
      });
    };
  }
  return out;
}

}  // namespace

Tensor sum(Tensor a, int axis) { return reduce(a, axis, false); }
Tensor mean(Tensor a, int axis) { return reduce(a, axis, true); }

Tensor sum_all(Tensor a) {
  Tensor row = a.rows() == 1 ? a : sum(a, 0);
  return row.cols() == 1 ? row : sum(row, 1);
}

Tensor mean_all(Tensor a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw numerical_error("concat: no operands");
  Tape& t = *parts[0].tape;
  long rows = parts[0].rows(), cols = parts[0].cols();
  bool req = false;
  long total = 0;
  for (const Tensor& p : parts) {
    check_same_tape(parts[0], p);
    req = req || t.node(p.id).requires_grad;
    if (axis == 0) {
      if (p.cols() != cols) shape_mismatch("concat", t.node(p.id));
      total += p.rows();
    } else {
      if (p.rows() != rows) shape_mismatch("concat", t.node(p.id));
      total += p.cols();
    }
  }
  const long out_rows = axis == 0 ? total : rows;
  const long out_cols = axis == 0 ? cols : total;
  Tensor out = t.emplace(out_rows, out_cols, req);
  std::vector<int> ids;
  std::vector<long> offsets;
  {
    auto& vo = t.node(out.id).value;
    long off = 0;
    for (const Tensor& p : parts) {
      ids.push_back(p.id);
      offsets.push_back(off);
      const auto& np = t.node(p.id);
      if (axis == 0) {
        std::copy(np.value.begin(), np.value.end(), vo.begin() + off * out_cols);
        off += np.rows;
      } else {
        for (long r = 0; r < rows; ++r)
          std::copy(np.value.begin() + r * np.cols, np.value.begin() + (r + 1) * np.cols,
                    vo.begin() + r * out_cols + off);
        off += np.cols;
      }
    }
  }
  if (req) {
    Tape* tp = &t;
    int out_id = out.id;
    t.node(out.id).backward = [tp, out_id, ids, offsets, axis, out_cols, rows]() {
      const auto& go = tp->node(out_id).grad;
      for (size_t p = 0; p < ids.size(); ++p) {
        auto& np = tp->node(ids[p]);
        if (!np.requires_grad) continue;
        auto gp = tp->grad_buffer(ids[p]);
        const long off = offsets[p];
        if (axis == 0) {
          for (size_t i = 0; i < gp.size(); ++i)
            gp[i] += go[static_cast<size_t>(off * out_cols) + i];
        } else {
          for (long r = 0; r < rows; ++r)
            for (long c = 0; c < np.cols; ++c)
              gp[static_cast<size_t>(r * np.cols + c)] +=
                  go[static_cast<size_t>(r * out_cols + off + c)];
        }
      }
    };
  }
  return out;
}

Tensor slice(Tensor a, int axis, long start, long len) {
  Tape& t = *a.tape;
  const long rows = a.rows(), cols = a.cols();
  const long limit = axis == 0 ? rows : cols;
  if (start < 0 || len <= 0 || start + len > limit) throw numerical_error("slice out of range");
  const long out_rows = axis == 0 ? len : rows;
  const long out_cols = axis == 0 ? cols : len;
  Tensor out = t.emplace(out_rows, out_cols, t.node(a.id).requires_grad);
  {
    const auto& xa = t.node(a.id).value;
    auto& vo = t.node(out.id).value;
    for (long r = 0; r < out_rows; ++r)
      for (long c = 0; c < out_cols; ++c) {
        const long sr = axis == 0 ? r + start : r;
        const long sc = axis == 0 ? c : c + start;
        vo[static_cast<size_t>(r * out_cols + c)] = xa[static_cast<size_t>(sr * cols + sc)];
      }
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int a_id = a.id, out_id = out.id;
    t.node(out.id).backward = [tp, a_id, out_id, axis, start, cols, out_rows, out_cols]() {
      if (!tp->node(a_id).requires_grad) return;
      auto ga = tp->grad_buffer(a_id);
      const auto& go = tp->node(out_id).grad;
      for (long r = 0; r < out_rows; ++r)
        for (long c = 0; c < out_cols; ++c) {
          const long sr = axis == 0 ? r + start : r;
          const long sc = axis == 0 ? c : c + start;
          ga[static_cast<size_t>(sr * cols + sc)] += go[static_cast<size_t>(r * out_cols + c)];
        }
    };
  }
  return out;
}

Tensor reshape(Tensor a, long rows, long cols) {
  if (rows * cols != a.numel()) throw numerical_error("reshape: element count mismatch");
  return make_unary(
      a, rows, cols,
      [](const Tape::Node& x, Tape::Node& o) {
        std::copy(x.value.begin(), x.value.end(), o.value.begin());
      },
      [](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      });
}

Tensor embedding(Tensor table, std::span<const int> indices) {
  Tape& t = *table.tape;
  const long k = table.rows(), d = table.cols();
  const long n = static_cast<long>(indices.size());
  if (n == 0) throw numerical_error("embedding: empty index list");
  for (int ix : indices)
    if (ix < 0 || ix >= k) throw numerical_error("embedding: index out of range");
  Tensor out = t.emplace(n, d, t.node(table.id).requires_grad);
  std::vector<int> idx(indices.begin(), indices.end());
  {
    const auto& tb = t.node(table.id).value;
    auto& vo = t.node(out.id).value;
    for (long i = 0; i < n; ++i)
      std::copy(tb.begin() + idx[static_cast<size_t>(i)] * d,
                tb.begin() + (idx[static_cast<size_t>(i)] + 1) * d, vo.begin() + i * d);
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int tb_id = table.id, out_id = out.id;
    t.node(out.id).backward = [tp, tb_id, out_id, idx, d, n]() {
      if (!tp->node(tb_id).requires_grad) return;
      auto gt = tp->grad_buffer(tb_id);
      const auto& go = tp->node(out_id).grad;
      for (long i = 0; i < n; ++i)
        for (long c = 0; c < d; ++c)
          gt[static_cast<size_t>(idx[static_cast<size_t>(i)] * d + c)] +=
              go[static_cast<size_t>(i * d + c)];
    };
  }
  return out;
}

Tensor masked_fill(Tensor a, std::span<const uint8_t> mask, double fill) {
  if (static_cast<long>(mask.size()) != a.numel())
    throw numerical_error("masked_fill: mask size mismatch");
  std::vector<uint8_t> m(mask.begin(), mask.end());
  return make_unary(
      a, a.rows(), a.cols(),
      [m, fill](const Tape::Node& x, Tape::Node& o) {
        for (size_t i = 0; i < x.value.size(); ++i) o.value[i] = m[i] ? fill : x.value[i];
      },
      [m](Tape& t, int a_id, int out_id) {
        auto ga = t.grad_buffer(a_id);
        const auto& go = t.node(out_id).grad;
        for (size_t i = 0; i < ga.size(); ++i)
          if (!m[i]) ga[i] += go[i];
      });
}

Tensor cross_entropy(Tensor logits, std::span<const int> targets) {
  Tape& t = *logits.tape;
  const long rows = logits.rows(), cols = logits.cols();
  if (static_cast<long>(targets.size()) != rows)
    throw numerical_error("cross_entropy: one target per row required");
  for (int ix : targets)
    if (ix < 0 || ix >= cols) throw numerical_error("cross_entropy: target out of range");
  std::vector<int> tg(targets.begin(), targets.end());
  Tensor out = t.emplace(1, 1, t.node(logits.id).requires_grad);
  {
    const auto& x = t.node(logits.id).value;
    double total = 0.0;
    for (long r = 0; r < rows; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (long c = 0; c < cols; ++c) {
        const double v = x[static_cast<size_t>(r * cols + c)];
        if (!std::isfinite(v)) throw numerical_error("cross_entropy: non-finite logits");
        mx = std::max(mx, v);
      }
      double lse = 0.0;
      for (long c = 0; c < cols; ++c) lse += std::exp(x[static_cast<size_t>(r * cols + c)] - mx);
      lse = mx + std::log(lse);
      total += lse - x[static_cast<size_t>(r * cols + tg[static_cast<size_t>(r)])];
    }
    t.node(out.id).value[0] = total / static_cast<double>(rows);
  }
  if (t.node(out.id).requires_grad) {
    Tape* tp = &t;
    int l_id = logits.id, out_id = out.id;
    t.node(out.id).backward = [tp, l_id, out_id, tg, rows, cols]() {
      if (!tp->node(l_id).requires_grad) return;
      auto gl = tp->grad_buffer(l_id);
      const auto& x = tp->node(l_id).value;
      const double g = tp->node(out_id).grad[0] / static_cast<double>(rows);
      for (long r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (long c = 0; c < cols; ++c) mx = std::max(mx, x[static_cast<size_t>(r * cols + c)]);
        double lse = 0.0;
        for (long c = 0; c < cols; ++c) lse += std::exp(x[static_cast<size_t>(r * cols + c)] - mx);
        for (long c = 0; c < cols; ++c) {
          const double p = std::exp(x[static_cast<size_t>(r * cols + c)] - mx) / lse;
          const double onehot = c == tg[static_cast<size_t>(r)] ? 1.0 : 0.0;
          gl[static_cast<size_t>(r * cols + c)] += g * (p - onehot);
        }
      }
    };
  }
  return out;
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> point, std::span<const double> analytic_grad,
                           double h, double tol) {
  if (point.size() != analytic_grad.size())
    throw numerical_error("grad_check: gradient and point size mismatch");
  GradCheckReport report;
  std::vector<double> x(point.begin(), point.end());
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    const double f0 = f(x);
    const double central = (fp - fm) / (2.0 * h);
    const double right = (fp - f0) / h;
    const double left = (f0 - fm) / h;
    // One-sided slopes that disagree mark a non-differentiable coordinate
    // (e.g. relu evaluated exactly at its kink); those are excluded, not failed.
    if (std::abs(right - left) / std::max({1.0, std::abs(right), std::abs(left)}) > 0.05) {
      report.excluded.push_back(static_cast<int>(i));
      continue;
    }
    const double denom = std::max({std::abs(analytic_grad[i]), std::abs(central), 1e-3});
    const double rel = std::abs(analytic_grad[i] - central) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = static_cast<int>(i);
    }
    ++report.checked;
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace moldiff::ad
