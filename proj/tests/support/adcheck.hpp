//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//
// Shared finite-difference checks for every autodiff primitive, used by both
// the unit tests and the acceptance gate (which differ only in point count).

#ifndef MOLDIFF_TESTS_SUPPORT_ADCHECK_HPP_
#define MOLDIFF_TESTS_SUPPORT_ADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "moldiff/autodiff.hpp"
#include "moldiff/rng.hpp"

namespace moldiff::testsupport {

struct PrimitiveCase {
  std::string name;
  // Runs one finite-difference comparison at a random point drawn from seed.
  std::function<ad::GradCheckReport(uint64_t seed, double tol)> run;
};

namespace detail {

// Wraps a graph builder into a scalar function of the flattened input by
// contracting the output against fixed random weights, then grad-checks it.
inline ad::GradCheckReport check_builder(
    const std::function<ad::Tensor(ad::Tape&, ad::Tensor)>& build, long rows, long cols,
    uint64_t seed, double tol, bool positive_domain) {
  Rng rng(seed);
  std::vector<double> point(static_cast<size_t>(rows * cols));
  for (double& v : point) {
    v = rng.normal();
    if (positive_domain) v = std::abs(v) + 0.5;
  }
  // Output weights are fixed after one probe forward pass.
  std::vector<double> weights;
  {
    ad::Tape tape;
    ad::Tensor x = tape.leaf(rows, cols, point, false);
    ad::Tensor y = build(tape, x);
    weights.resize(static_cast<size_t>(y.numel()));
    for (double& w : weights) w = rng.normal();
  }
  auto scalar = [&](std::span<const double> p) {
    ad::Tape tape;
    ad::Tensor x = tape.leaf(rows, cols, p, false);
    ad::Tensor y = build(tape, x);
    double out = 0.0;
    auto v = y.value();
    for (size_t i = 0; i < v.size(); ++i) out += v[i] * weights[i];
    return out;
  };
  std::vector<double> analytic;
  {
    ad::Tape tape;
    ad::Tensor x = tape.leaf(rows, cols, point, true);
    ad::Tensor y = build(tape, x);
    ad::Tensor w = tape.constant(y.rows(), y.cols(), weights);
    ad::Tensor loss = ad::sum_all(ad::mul(y, w));
    tape.backward(loss);
    auto g = x.grad();
    analytic.assign(g.begin(), g.end());
  }
  return ad::grad_check(scalar, point, analytic, 1e-5, tol);
}

}  // namespace detail

// One case per primitive and differentiable operand.
inline std::vector<PrimitiveCase> primitive_cases() {
  using ad::Tensor;
  using ad::Tape;
  std::vector<PrimitiveCase> cases;
  auto add_case = [&](const std::string& name, long rows, long cols, bool positive,
                      std::function<Tensor(Tape&, Tensor)> build) {
    cases.push_back({name, [=](uint64_t seed, double tol) {
                       return detail::check_builder(build, rows, cols, seed, tol, positive);
                     }});
  };

  auto fixed = [](Tape& t, long rows, long cols, uint64_t seed) {
    Rng r(seed);
    std::vector<double> v(static_cast<size_t>(rows * cols));
    for (double& x : v) x = r.normal();
    return t.leaf(rows, cols, v, false);
  };

  add_case("matmul.lhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::matmul(x, fixed(t, 4, 2, 11));
  });
  add_case("matmul.rhs", 4, 2, false, [fixed](Tape& t, Tensor x) {
    return ad::matmul(fixed(t, 3, 4, 12), x);
  });
  add_case("matmul.lhs_transposed", 4, 3, false, [fixed](Tape& t, Tensor x) {
    return ad::matmul(x, fixed(t, 4, 2, 13), true, false);
  });
  add_case("matmul.rhs_transposed", 2, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::matmul(fixed(t, 3, 4, 14), x, false, true);
  });
  add_case("add.lhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::add(x, fixed(t, 3, 4, 15));
  });
  add_case("add.row_broadcast", 1, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::add(fixed(t, 3, 4, 16), x);
  });
  add_case("add.col_broadcast", 3, 1, false, [fixed](Tape& t, Tensor x) {
    return ad::add(fixed(t, 3, 4, 17), x);
  });
  add_case("add.scalar_operand", 1, 1, false, [fixed](Tape& t, Tensor x) {
    return ad::add(fixed(t, 3, 4, 18), x);
  });
  add_case("sub.lhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::sub(x, fixed(t, 3, 4, 19));
  });
  add_case("sub.rhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::sub(fixed(t, 3, 4, 20), x);
  });
  add_case("mul.lhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::mul(x, fixed(t, 3, 4, 21));
  });
  add_case("mul.row_broadcast", 1, 4, false, [fixed](Tape& t, Tensor x) {
    return ad::mul(fixed(t, 3, 4, 22), x);
  });
  add_case("div.lhs", 3, 4, false, [fixed](Tape& t, Tensor x) {
    Tensor denom = ad::add_scalar(ad::relu(fixed(t, 3, 4, 23)), 0.7);
    return ad::div(x, denom);
  });
  add_case("div.rhs", 3, 4, true, [fixed](Tape& t, Tensor x) {
    return ad::div(fixed(t, 3, 4, 24), x);
  });
  add_case("scale", 3, 4, false, [](Tape&, Tensor x) { return ad::scale(x, -2.5); });
  add_case("add_scalar", 3, 4, false, [](Tape&, Tensor x) { return ad::add_scalar(x, 1.25); });
  add_case("neg", 3, 4, false, [](Tape&, Tensor x) { return ad::neg(x); });
  add_case("relu", 3, 4, false, [](Tape&, Tensor x) { return ad::relu(x); });
  add_case("exp", 3, 4, false, [](Tape&, Tensor x) { return ad::exp(x); });
  add_case("log", 3, 4, true, [](Tape&, Tensor x) { return ad::log(x); });
  add_case("sqrt", 3, 4, true, [](Tape&, Tensor x) { return ad::sqrt(x); });
  add_case("softmax.rows", 3, 5, false, [](Tape&, Tensor x) { return ad::softmax(x, 1); });
  add_case("softmax.cols", 5, 3, false, [](Tape&, Tensor x) { return ad::softmax(x, 0); });
  add_case("layernorm.rows", 3, 6, false, [](Tape&, Tensor x) { return ad::layernorm(x, 1); });
  add_case("layernorm.cols", 6, 3, false, [](Tape&, Tensor x) { return ad::layernorm(x, 0); });
  add_case("sum.rows", 3, 4, false, [](Tape&, Tensor x) { return ad::sum(x, 1); });
  add_case("sum.cols", 3, 4, false, [](Tape&, Tensor x) { return ad::sum(x, 0); });
  add_case("mean.rows", 3, 4, false, [](Tape&, Tensor x) { return ad::mean(x, 1); });
  add_case("mean.cols", 3, 4, false, [](Tape&, Tensor x) { return ad::mean(x, 0); });
  add_case("mean_all", 3, 4, false, [](Tape&, Tensor x) { return ad::mean_all(x); });
  add_case("concat.rows", 2, 4, false, [fixed](Tape& t, Tensor x) {
    const ad::Tensor parts[] = {x, fixed(t, 3, 4, 25), x};
    return ad::concat(parts, 0);
  });
  add_case("concat.cols", 3, 2, false, [fixed](Tape& t, Tensor x) {
    const ad::Tensor parts[] = {fixed(t, 3, 3, 26), x};
    return ad::concat(parts, 1);
  });
  add_case("slice.rows", 5, 4, false, [](Tape&, Tensor x) { return ad::slice(x, 0, 1, 3); });
  add_case("slice.cols", 4, 6, false, [](Tape&, Tensor x) { return ad::slice(x, 1, 2, 3); });
  add_case("reshape", 3, 4, false, [](Tape&, Tensor x) { return ad::reshape(x, 2, 6); });
  add_case("embedding", 5, 3, false, [](Tape&, Tensor x) {
    const int idx[] = {2, 0, 4, 2};
    return ad::embedding(x, idx);
  });
  add_case("masked_fill", 3, 4, false, [](Tape&, Tensor x) {
    static const uint8_t mask[12] = {1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0};
    return ad::masked_fill(x, mask, -5.0);
  });
  add_case("cross_entropy", 4, 5, false, [](Tape&, Tensor x) {
    const int targets[] = {1, 0, 4, 2};
    return ad::cross_entropy(x, targets);
  });
  return cases;
}

}  // namespace moldiff::testsupport

#endif  // MOLDIFF_TESTS_SUPPORT_ADCHECK_HPP_
