//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_DIFFUSION_HPP_
#define MOLDIFF_DIFFUSION_HPP_

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "moldiff/errors.hpp"
#include "moldiff/molgraph.hpp"
#include "moldiff/rng.hpp"

namespace moldiff {

inline constexpr int kNodeCategories = kNumElements;  // 11 elements
inline constexpr int kEdgeCategories = 5;             // none, single, double, triple, aromatic
inline constexpr int kEdgeNone = 0;

// Edge category <-> bond order (category 0 is "no bond").
int edge_category(BondOrder order);
std::optional<BondOrder> bond_order_from_category(int category);

// Row-stochastic K x K matrix, row-major.
struct TransitionMatrix {
  int k = 0;
  std::vector<double> m;

  double at(int row, int col) const { return m[static_cast<size_t>(row * k + col)]; }
  double& at(int row, int col) { return m[static_cast<size_t>(row * k + col)]; }
  static TransitionMatrix identity(int k);
  TransitionMatrix multiplied_by(const TransitionMatrix& rhs) const;
};

enum class ScheduleKind { kUniform, kMarginal };

// Cosine cumulative-retention schedule over T steps with per-step transitions
// Q_t = a_t I + (1-a_t) 1 m^T and exact cumulative products. Index t runs
// 1..T; entry 0 holds the identity / retention 1.
struct NoiseSchedule {
  int steps = 0;
  ScheduleKind kind = ScheduleKind::kUniform;
  std::vector<double> alpha;      // per-step retention a_t, [0] unused = 1
  std::vector<double> alpha_bar;  // cumulative retention, [0] = 1
  std::vector<TransitionMatrix> q_node, qbar_node;  // K = kNodeCategories
  std::vector<TransitionMatrix> q_edge, qbar_edge;  // K = kEdgeCategories
  std::vector<double> node_marginal;  // mixing target; uniform for kUniform
  std::vector<double> edge_marginal;
};

NoiseSchedule build_schedule(int steps, ScheduleKind kind = ScheduleKind::kUniform,
                             std::span<const double> node_marginal = {},
                             std::span<const double> edge_marginal = {});

// One molecule as categorical distributions: nodes n x K_a, edges n x n x K_b
// (row-major, symmetric, diagonal pinned to "none"). Rows of inactive nodes
// (mask false) are ignored by every operation.
struct CategoricalGraphState {
  int n = 0;
  std::vector<double> node;
  std::vector<double> edge;
  std::vector<uint8_t> mask;

  static CategoricalGraphState zeros(int n);
  std::span<double> node_row(int i) { return {node.data() + i * kNodeCategories, kNodeCategories}; }
  std::span<const double> node_row(int i) const {
    return {node.data() + i * kNodeCategories, static_cast<size_t>(kNodeCategories)};
  }
  std::span<double> edge_row(int i, int j) {
    return {edge.data() + (i * n + j) * kEdgeCategories, static_cast<size_t>(kEdgeCategories)};
  }
  std::span<const double> edge_row(int i, int j) const {
    return {edge.data() + (i * n + j) * kEdgeCategories, static_cast<size_t>(kEdgeCategories)};
  }
  int node_argmax(int i) const;
  int edge_argmax(int i, int j) const;
};

// One-hot encoding of a molecular graph (atoms become element categories;
// charges, hydrogens and aromatic flags are not represented).
CategoricalGraphState state_from_graph(const MolecularGraph& g);
// Argmax decoding to a molecular graph; aromatic flags are set on atoms
// incident to aromatic edges.
MolecularGraph graph_from_state(const CategoricalGraphState& s);

// Applies the cumulative kernel at step t and samples a concrete state.
CategoricalGraphState forward_sample(const CategoricalGraphState& x0, int t,
                                     const NoiseSchedule& sched, uint64_t seed);

struct DiffusionError {
  std::string message;
  Error to_error() const { return numerical_error(message); }
};

// Posterior row of x_{t-1} given a concrete x_t category and an x0
// distribution (or one-hot), for the chain with transition q and cumulative
// qbar_prev: row_j proportional to q[j, x_t] * (x0 . qbar_prev)[j].
Result<std::vector<double>, DiffusionError> posterior_row(int xt_category,
                                                          std::span<const double> x0_row,
                                                          const TransitionMatrix& q_t,
                                                          const TransitionMatrix& qbar_prev);

// Guided distribution softmax(u + s (c - u)) from conditional/unconditional
// logits; s=1 returns softmax(c), s=0 softmax(u).
Result<std::vector<double>, DiffusionError> cfg_combine(std::span<const double> cond_logits,
                                                        std::span<const double> uncond_logits,
                                                        double s);

// Per-position logits produced by a denoising model at step t. Edge logits
// must already be symmetric.
struct DenoiseLogits {
  std::vector<double> node;  // n x kNodeCategories
  std::vector<double> edge;  // n x n x kEdgeCategories
};

// cond: embedding to condition on, or nullopt for unconditional.
using DenoiserFn = std::function<DenoiseLogits(const CategoricalGraphState&, int t,
                                               const std::optional<std::vector<double>>& cond)>;

// One reverse transition x_t -> x_{t-1}. For t > 1 each position mixes the
// exact posterior over the guided clean-state distribution; at t = 1 the
// guided distribution is sampled directly.
CategoricalGraphState reverse_step(const CategoricalGraphState& xt, const DenoiseLogits& cond,
                                   const DenoiseLogits& uncond, int t, double s,
                                   const NoiseSchedule& sched, Rng& rng);

struct SampleResult {
  CategoricalGraphState state;
  MolecularGraph graph;
};

// Full reverse chain from the schedule's stationary initialization.
// `condition` empty means unconditional sampling (the model is still queried
// with nullopt for the guidance baseline when s != 1).
SampleResult sample(const NoiseSchedule& sched, const DenoiserFn& model,
                    const std::optional<std::vector<double>>& condition, int n_atoms, double s,
                    uint64_t seed);

}  // namespace moldiff

#endif  // MOLDIFF_DIFFUSION_HPP_
