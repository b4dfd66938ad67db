//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_PARAMS_HPP_
#define MOLDIFF_PARAMS_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "moldiff/autodiff.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/rng.hpp"

namespace moldiff {

// Named, ordered collection of trainable matrices. Lives outside any tape;
// each forward pass binds the needed entries onto a fresh tape.
class ParamStore {
 public:
  struct Param {
    std::string name;
    long rows = 0;
    long cols = 0;
    std::vector<double> value;
  };

  // Registers a parameter; init fills the buffer (already zeroed).
  Param& add(const std::string& name, long rows, long cols,
             const std::function<void(std::vector<double>&)>& init = {}) {
    if (index_.count(name)) throw numerical_error("duplicate parameter: " + name);
    Param p;
    p.name = name;
    p.rows = rows;
    p.cols = cols;
    p.value.assign(static_cast<size_t>(rows * cols), 0.0);
    if (init) init(p.value);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Param& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw numerical_error("unknown parameter: " + name);
    return params_[it->second];
  }
  const Param& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw numerical_error("unknown parameter: " + name);
    return params_[it->second];
  }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Common initializers.
inline std::function<void(std::vector<double>&)> init_normal(Rng& rng, double sigma) {
  return [&rng, sigma](std::vector<double>& v) {
    for (double& x : v) x = rng.normal() * sigma;
  };
}

inline std::function<void(std::vector<double>&)> init_const(double c) {
  return [c](std::vector<double>& v) {
    for (double& x : v) x = c;
  };
}

// Binds store parameters onto a tape, one node per distinct name, so every use
// of a parameter in the forward program shares a node and gradients accumulate.
class TapeBinder {
 public:
  TapeBinder(ad::Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

  ad::Tensor operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& p = store_->get(name);
    ad::Tensor t = tape_->leaf(p.rows, p.cols, {p.value.data(), p.value.size()}, true);
    bound_.emplace(name, t);
    return t;
  }

  // Gradient of a bound parameter after backward(); zeros if it never
  // influenced the loss.
  std::vector<double> grad_of(const std::string& name) const {
    auto it = bound_.find(name);
    if (it == bound_.end()) return {};
    auto g = it->second.grad();
    if (g.empty()) return std::vector<double>(static_cast<size_t>(it->second.numel()), 0.0);
    return std::vector<double>(g.begin(), g.end());
  }

  const std::unordered_map<std::string, ad::Tensor>& bound() const { return bound_; }

 private:
  ad::Tape* tape_;
  ParamStore* store_;
  std::unordered_map<std::string, ad::Tensor> bound_;
};

// Adam with bias correction; state is keyed by parameter name so partially
// bound steps (parameters absent from a batch's graph) stay consistent.
class Adam {
 public:
  Adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store, const TapeBinder& binder) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, tensor] : binder.bound()) {
      auto grad = binder.grad_of(name);
      auto& p = store.get(name);
      auto& s = slots_[name];
      if (s.m.empty()) {
        s.m.assign(p.value.size(), 0.0);
        s.v.assign(p.value.size(), 0.0);
      }
      for (size_t i = 0; i < p.value.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g)) throw numerical_error("non-finite gradient for " + name);
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  uint64_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  uint64_t t_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

// linear layer helper: y = x W + b (b broadcast over rows).
inline ad::Tensor linear(TapeBinder& bind, ad::Tensor x, const std::string& prefix) {
  return ad::add(ad::matmul(x, bind(prefix + ".w")), bind(prefix + ".b"));
}

inline void add_linear(ParamStore& store, const std::string& prefix, long in, long out, Rng& rng,
                       double sigma_scale = 1.0) {
  const double sigma = sigma_scale / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".w", in, out, init_normal(rng, sigma));
  store.add(prefix + ".b", 1, out);
}

}  // namespace moldiff

#endif  // MOLDIFF_PARAMS_HPP_
