//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moldiff {

int edge_category(BondOrder order) {
  switch (order) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 4;
  }
  return kEdgeNone;
}

std::optional<BondOrder> bond_order_from_category(int category) {
  switch (category) {
    case 1: return BondOrder::Single;
    case 2: return BondOrder::Double;
    case 3: return BondOrder::Triple;
    case 4: return BondOrder::Aromatic;
    default: return std::nullopt;
  }
}

TransitionMatrix TransitionMatrix::identity(int k) {
  TransitionMatrix t;
  t.k = k;
  t.m.assign(static_cast<size_t>(k * k), 0.0);
  for (int i = 0; i < k; ++i) t.at(i, i) = 1.0;
  return t;
}

TransitionMatrix TransitionMatrix::multiplied_by(const TransitionMatrix& rhs) const {
  if (k != rhs.k) throw numerical_error("transition matrix size mismatch");
  TransitionMatrix out;
  out.k = k;
  out.m.assign(static_cast<size_t>(k * k), 0.0);
  for (int i = 0; i < k; ++i)
    for (int l = 0; l < k; ++l) {
      const double v = at(i, l);
      if (v == 0.0) continue;
      for (int j = 0; j < k; ++j) out.at(i, j) += v * rhs.at(l, j);
    }
  return out;
}

namespace {

// Cumulative retention of the cosine schedule.
double cosine_alpha_bar(int t, int steps) {
  constexpr double kOffset = 0.008;
  auto f = [&](double u) {
    const double x = (u / static_cast<double>(steps) + kOffset) / (1.0 + kOffset) * 1.5707963267948966;
    const double c = std::cos(x);
    return c * c;
  };
  return f(static_cast<double>(t)) / f(0.0);
}

TransitionMatrix mixing_step(double retention, std::span<const double> marginal) {
  const int k = static_cast<int>(marginal.size());
  TransitionMatrix q;
  q.k = k;
  q.m.assign(static_cast<size_t>(k * k), 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      q.at(i, j) = (1.0 - retention) * marginal[static_cast<size_t>(j)] + (i == j ? retention : 0.0);
  return q;
}

std::vector<double> uniform_marginal(int k) {
  return std::vector<double>(static_cast<size_t>(k), 1.0 / static_cast<double>(k));
}

void validate_marginal(std::span<const double> m, int k, const char* which) {
  if (static_cast<int>(m.size()) != k)
    throw config_error(std::string(which) + " marginal has wrong length");
  double total = 0.0;
  for (double v : m) {
    if (!(v >= 0.0)) throw config_error(std::string(which) + " marginal has negative entries");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw config_error(std::string(which) + " marginal does not sum to 1");
}

}  // namespace

NoiseSchedule build_schedule(int steps, ScheduleKind kind, std::span<const double> node_marginal,
                             std::span<const double> edge_marginal) {
  if (steps < 1) throw config_error("schedule needs at least one step");
  NoiseSchedule s;
  s.steps = steps;
  s.kind = kind;
  if (kind == ScheduleKind::kUniform) {
    s.node_marginal = uniform_marginal(kNodeCategories);
    s.edge_marginal = uniform_marginal(kEdgeCategories);
  } else {
    validate_marginal(node_marginal, kNodeCategories, "node");
    validate_marginal(edge_marginal, kEdgeCategories, "edge");
    s.node_marginal.assign(node_marginal.begin(), node_marginal.end());
    s.edge_marginal.assign(edge_marginal.begin(), edge_marginal.end());
  }

  s.alpha.assign(static_cast<size_t>(steps + 1), 1.0);
  s.alpha_bar.assign(static_cast<size_t>(steps + 1), 1.0);
  s.q_node.assign(static_cast<size_t>(steps + 1), TransitionMatrix::identity(kNodeCategories));
  s.q_edge.assign(static_cast<size_t>(steps + 1), TransitionMatrix::identity(kEdgeCategories));
  s.qbar_node = s.q_node;
  s.qbar_edge = s.q_edge;

  for (int t = 1; t <= steps; ++t) {
    const double ab = cosine_alpha_bar(t, steps);
    s.alpha_bar[static_cast<size_t>(t)] = ab;
    s.alpha[static_cast<size_t>(t)] = ab / s.alpha_bar[static_cast<size_t>(t - 1)];
    s.q_node[static_cast<size_t>(t)] = mixing_step(s.alpha[static_cast<size_t>(t)], s.node_marginal);
    s.q_edge[static_cast<size_t>(t)] = mixing_step(s.alpha[static_cast<size_t>(t)], s.edge_marginal);
    // The cumulative kernel is the literal product of the per-step kernels.
    s.qbar_node[static_cast<size_t>(t)] =
        s.qbar_node[static_cast<size_t>(t - 1)].multiplied_by(s.q_node[static_cast<size_t>(t)]);
    s.qbar_edge[static_cast<size_t>(t)] =
        s.qbar_edge[static_cast<size_t>(t - 1)].multiplied_by(s.q_edge[static_cast<size_t>(t)]);
  }
  return s;
}

CategoricalGraphState CategoricalGraphState::zeros(int n) {
  CategoricalGraphState s;
  s.n = n;
  s.node.assign(static_cast<size_t>(n) * kNodeCategories, 0.0);
  s.edge.assign(static_cast<size_t>(n) * static_cast<size_t>(n) * kEdgeCategories, 0.0);
  s.mask.assign(static_cast<size_t>(n), 1);
  return s;
}

int CategoricalGraphState::node_argmax(int i) const {
  auto row = node_row(i);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

int CategoricalGraphState::edge_argmax(int i, int j) const {
  auto row = edge_row(i, j);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

CategoricalGraphState state_from_graph(const MolecularGraph& g) {
  const int n = g.num_atoms();
  if (n == 0) throw data_error("cannot encode an empty graph");
  CategoricalGraphState s = CategoricalGraphState::zeros(n);
  for (int i = 0; i < n; ++i)
    s.node_row(i)[static_cast<size_t>(g.atom(i).element)] = 1.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      s.edge_row(i, j)[kEdgeNone] = 1.0;
  for (const Bond& b : g.bonds()) {
    const int c = edge_category(b.order);
    auto ab = s.edge_row(b.a, b.b);
    auto ba = s.edge_row(b.b, b.a);
    ab[kEdgeNone] = 0.0;
    ab[static_cast<size_t>(c)] = 1.0;
    ba[kEdgeNone] = 0.0;
    ba[static_cast<size_t>(c)] = 1.0;
  }
  return s;
}

MolecularGraph graph_from_state(const CategoricalGraphState& s) {
  MolecularGraph g;
  std::vector<int> remap(static_cast<size_t>(s.n), -1);
  for (int i = 0; i < s.n; ++i) {
    if (!s.mask[static_cast<size_t>(i)]) continue;
    Atom a;
    a.element = static_cast<Element>(s.node_argmax(i));
    remap[static_cast<size_t>(i)] = g.add_atom(a);
  }
  for (int i = 0; i < s.n; ++i) {
    for (int j = i + 1; j < s.n; ++j) {
      if (remap[static_cast<size_t>(i)] < 0 || remap[static_cast<size_t>(j)] < 0) continue;
      const auto order = bond_order_from_category(s.edge_argmax(i, j));
      if (!order) continue;
      g.add_bond(remap[static_cast<size_t>(i)], remap[static_cast<size_t>(j)], *order);
      if (*order == BondOrder::Aromatic) {
        g.atom(remap[static_cast<size_t>(i)]).aromatic = true;
        g.atom(remap[static_cast<size_t>(j)]).aromatic = true;
      }
    }
  }
  return g;
}

namespace {

// row . Q (vector times matrix).
void push_through(std::span<const double> row, const TransitionMatrix& q, std::span<double> out) {
  for (int j = 0; j < q.k; ++j) out[static_cast<size_t>(j)] = 0.0;
  for (int i = 0; i < q.k; ++i) {
    const double v = row[static_cast<size_t>(i)];
    if (v == 0.0) continue;
    for (int j = 0; j < q.k; ++j) out[static_cast<size_t>(j)] += v * q.at(i, j);
  }
}

void set_onehot(std::span<double> row, int category) {
  std::fill(row.begin(), row.end(), 0.0);
  row[static_cast<size_t>(category)] = 1.0;
}

void check_step(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) throw numerical_error("step index out of schedule range");
}

}  // namespace

CategoricalGraphState forward_sample(const CategoricalGraphState& x0, int t,
                                     const NoiseSchedule& sched, uint64_t seed) {
  check_step(t, sched);
  Rng rng(seed);
  CategoricalGraphState out = x0;
  const TransitionMatrix& qn = sched.qbar_node[static_cast<size_t>(t)];
  const TransitionMatrix& qe = sched.qbar_edge[static_cast<size_t>(t)];
  std::vector<double> probs(static_cast<size_t>(std::max(kNodeCategories, kEdgeCategories)));
  for (int i = 0; i < x0.n; ++i) {
    if (!x0.mask[static_cast<size_t>(i)]) continue;
    std::span<double> p(probs.data(), kNodeCategories);
    push_through(x0.node_row(i), qn, p);
    set_onehot(out.node_row(i), rng.categorical(p));
  }
  for (int i = 0; i < x0.n; ++i) {
    for (int j = i + 1; j < x0.n; ++j) {
      if (!x0.mask[static_cast<size_t>(i)] || !x0.mask[static_cast<size_t>(j)]) continue;
      std::span<double> p(probs.data(), kEdgeCategories);
      push_through(x0.edge_row(i, j), qe, p);
      const int c = rng.categorical(p);
      set_onehot(out.edge_row(i, j), c);
      set_onehot(out.edge_row(j, i), c);
    }
  }
  return out;
}

Result<std::vector<double>, DiffusionError> posterior_row(int xt_category,
                                                          std::span<const double> x0_row,
                                                          const TransitionMatrix& q_t,
                                                          const TransitionMatrix& qbar_prev) {
  const int k = q_t.k;
  if (xt_category < 0 || xt_category >= k) throw numerical_error("posterior: category out of range");
  if (static_cast<int>(x0_row.size()) != k) throw numerical_error("posterior: x0 row length mismatch");
  std::vector<double> prior(static_cast<size_t>(k));
  push_through(x0_row, qbar_prev, prior);
  std::vector<double> row(static_cast<size_t>(k));
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const double v = q_t.at(j, xt_category) * prior[static_cast<size_t>(j)];
    row[static_cast<size_t>(j)] = v;
    total += v;
  }
  if (!(total > 0.0)) return DiffusionError{"posterior row has zero normalizer"};
  for (double& v : row) v /= total;
  return row;
}

Result<std::vector<double>, DiffusionError> cfg_combine(std::span<const double> cond_logits,
                                                        std::span<const double> uncond_logits,
                                                        double s) {
  if (cond_logits.size() != uncond_logits.size())
    throw numerical_error("cfg_combine: length mismatch");
  const size_t k = cond_logits.size();
  std::vector<double> guided(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < k; ++i) {
    if (!std::isfinite(cond_logits[i]) || !std::isfinite(uncond_logits[i]))
      return DiffusionError{"cfg_combine: non-finite logits"};
    guided[i] = uncond_logits[i] + s * (cond_logits[i] - uncond_logits[i]);
    mx = std::max(mx, guided[i]);
  }
  if (!std::isfinite(mx)) return DiffusionError{"cfg_combine: non-finite guided logits"};
  double total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    guided[i] = std::exp(guided[i] - mx);
    total += guided[i];
  }
  for (double& v : guided) v /= total;
  return guided;
}

namespace {

// Reverse-transition distribution for one position: mixture of exact
// posteriors over the guided clean-state distribution.
std::vector<double> reverse_distribution(int xt_category, std::span<const double> guided,
                                         const TransitionMatrix& q_t,
                                         const TransitionMatrix& qbar_prev) {
  const int k = q_t.k;
  std::vector<double> out(static_cast<size_t>(k), 0.0);
  std::vector<double> onehot(static_cast<size_t>(k), 0.0);
  for (int cat = 0; cat < k; ++cat) {
    const double w = guided[static_cast<size_t>(cat)];
    if (w <= 0.0) continue;
    std::fill(onehot.begin(), onehot.end(), 0.0);
    onehot[static_cast<size_t>(cat)] = 1.0;
    auto post = posterior_row(xt_category, onehot, q_t, qbar_prev);
    if (!post.ok()) throw post.error().to_error();
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(j)] += w * post.value()[static_cast<size_t>(j)];
  }
  return out;
}

}  // namespace

CategoricalGraphState reverse_step(const CategoricalGraphState& xt, const DenoiseLogits& cond,
                                   const DenoiseLogits& uncond, int t, double s,
                                   const NoiseSchedule& sched, Rng& rng) {
  check_step(t, sched);
  const int n = xt.n;
  if (static_cast<int>(cond.node.size()) != n * kNodeCategories ||
      static_cast<int>(uncond.node.size()) != n * kNodeCategories)
    throw numerical_error("reverse_step: node logits size mismatch");
  if (static_cast<int>(cond.edge.size()) != n * n * kEdgeCategories ||
      static_cast<int>(uncond.edge.size()) != n * n * kEdgeCategories)
    throw numerical_error("reverse_step: edge logits size mismatch");

  CategoricalGraphState out = xt;
  for (int i = 0; i < n; ++i) {
    if (!xt.mask[static_cast<size_t>(i)]) continue;
    std::span<const double> c(cond.node.data() + i * kNodeCategories, kNodeCategories);
    std::span<const double> u(uncond.node.data() + i * kNodeCategories, kNodeCategories);
    auto guided = cfg_combine(c, u, s);
    if (!guided.ok()) throw guided.error().to_error();
    int draw;
    if (t == 1) {
      draw = rng.categorical(guided.value());
    } else {
      const auto dist =
          reverse_distribution(xt.node_argmax(i), guided.value(),
                               sched.q_node[static_cast<size_t>(t)],
                               sched.qbar_node[static_cast<size_t>(t - 1)]);
      draw = rng.categorical(dist);
    }
    set_onehot(out.node_row(i), draw);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!xt.mask[static_cast<size_t>(i)] || !xt.mask[static_cast<size_t>(j)]) continue;
      const size_t off = static_cast<size_t>((i * n + j) * kEdgeCategories);
      std::span<const double> c(cond.edge.data() + off, kEdgeCategories);
      std::span<const double> u(uncond.edge.data() + off, kEdgeCategories);
      auto guided = cfg_combine(c, u, s);
      if (!guided.ok()) throw guided.error().to_error();
      int draw;
      if (t == 1) {
        draw = rng.categorical(guided.value());
      } else {
        const auto dist =
            reverse_distribution(xt.edge_argmax(i, j), guided.value(),
                                 sched.q_edge[static_cast<size_t>(t)],
                                 sched.qbar_edge[static_cast<size_t>(t - 1)]);
        draw = rng.categorical(dist);
      }
      set_onehot(out.edge_row(i, j), draw);
      set_onehot(out.edge_row(j, i), draw);
    }
  }
  return out;
}

SampleResult sample(const NoiseSchedule& sched, const DenoiserFn& model,
                    const std::optional<std::vector<double>>& condition, int n_atoms, double s,
                    uint64_t seed) {
  if (n_atoms < 1) throw config_error("sample: need at least one atom");
  Rng rng(seed);
  CategoricalGraphState state = CategoricalGraphState::zeros(n_atoms);
  for (int i = 0; i < n_atoms; ++i)
    set_onehot(state.node_row(i), rng.categorical(sched.node_marginal));
  for (int i = 0; i < n_atoms; ++i) {
    set_onehot(state.edge_row(i, i), kEdgeNone);
    for (int j = i + 1; j < n_atoms; ++j) {
      const int c = rng.categorical(sched.edge_marginal);
      set_onehot(state.edge_row(i, j), c);
      set_onehot(state.edge_row(j, i), c);
    }
  }
  for (int t = sched.steps; t >= 1; --t) {
    DenoiseLogits cond_logits, uncond_logits;
    if (condition && s == 1.0) {
      cond_logits = model(state, t, condition);
      uncond_logits = cond_logits;
    } else if (condition) {
      cond_logits = model(state, t, condition);
      uncond_logits = model(state, t, std::nullopt);
    } else {
      uncond_logits = model(state, t, std::nullopt);
      cond_logits = uncond_logits;
    }
    state = reverse_step(state, cond_logits, uncond_logits, t, condition ? s : 0.0, sched, rng);
  }
  SampleResult result;
  result.graph = graph_from_state(state);
  result.state = std::move(state);
  return result;
}

}  // namespace moldiff
