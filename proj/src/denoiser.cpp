//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/denoiser.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moldiff/chem.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/tfe.hpp"

namespace moldiff {

namespace {

void check_config(const DenoiserConfig& cfg) {
  if (cfg.d_model < 1 || cfg.num_heads < 1 || cfg.num_blocks < 1 || cfg.d_ff < 1 ||
      cfg.d_cond < 1 || cfg.max_steps < 1) {
    throw config_error("denoiser: all dimensions must be positive");
  }
  if (cfg.d_model % cfg.num_heads != 0) {
    throw config_error("denoiser: d_model must divide evenly into heads");
  }
}

// Linear layer whose weight and bias both start at zero.
void add_zero_linear(ParamStore& store, const std::string& prefix, long in, long out) {
  store.add(prefix + ".w", in, out);
  store.add(prefix + ".b", 1, out);
}

std::string block_name(const std::string& prefix, int b) {
  return prefix + ".block" + std::to_string(b);
}

// Multi-head self-attention over h (n x d) with a per-head additive bias on
// the n x n score matrix.
ad::Tensor biased_self_attention(TapeBinder& bind, ad::Tensor h,
                                 const std::vector<ad::Tensor>& bias_heads, int num_heads,
                                 const std::string& base) {
  const long d = h.cols();
  const long dh = d / num_heads;
  ad::Tensor q = linear(bind, h, base + ".q");
  ad::Tensor k = linear(bind, h, base + ".k");
  ad::Tensor v = linear(bind, h, base + ".v");
  std::vector<ad::Tensor> outs;
  outs.reserve(static_cast<size_t>(num_heads));
  for (int hd = 0; hd < num_heads; ++hd) {
    ad::Tensor qh = ad::slice(q, 1, hd * dh, dh);
    ad::Tensor kh = ad::slice(k, 1, hd * dh, dh);
    ad::Tensor vh = ad::slice(v, 1, hd * dh, dh);
    ad::Tensor scores = ad::scale(ad::matmul(qh, kh, false, true),
                                  1.0 / std::sqrt(static_cast<double>(dh)));
    scores = ad::add(scores, bias_heads[static_cast<size_t>(hd)]);
    outs.push_back(ad::matmul(ad::softmax(scores, 1), vh));
  }
  ad::Tensor merged = ad::concat(outs, 1);
  return linear(bind, merged, base + ".out");
}

void check_state_one_hot(const CategoricalGraphState& state) {
  auto is_one_hot = [](std::span<const double> row) {
    int ones = 0;
    for (double v : row) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        return false;
      }
    }
    return ones == 1;
  };
  for (int i = 0; i < state.n; ++i) {
    if (!state.mask[static_cast<size_t>(i)]) continue;
    if (!is_one_hot(state.node_row(i))) {
      throw data_error("denoise: node row " + std::to_string(i) + " is not one-hot");
    }
    for (int j = 0; j < state.n; ++j) {
      if (!state.mask[static_cast<size_t>(j)]) continue;
      if (!is_one_hot(state.edge_row(i, j))) {
        throw data_error("denoise: edge row (" + std::to_string(i) + "," + std::to_string(j) +
                         ") is not one-hot");
      }
    }
  }
}

}  // namespace

void add_denoiser_params(ParamStore& store, const DenoiserConfig& cfg, Rng& rng,
                         const std::string& prefix) {
  check_config(cfg);
  add_linear(store, prefix + ".node_in", kNodeCategories, cfg.d_model, rng);
  store.add(prefix + ".t_embed", cfg.max_steps + 1, cfg.d_model, init_normal(rng, 0.02));
  store.add(prefix + ".edge_bias.w", kEdgeCategories, cfg.num_heads,
            init_normal(rng, 1.0 / std::sqrt(static_cast<double>(kEdgeCategories))));
  add_linear(store, prefix + ".edge_in", kEdgeCategories, cfg.d_model, rng);
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = block_name(prefix, b);
    // Zero modulation nets make a fresh model ignore its condition: the scale
    // starts at one and the shift at zero.
    add_zero_linear(store, base + ".adaln_g", cfg.d_cond, cfg.d_model);
    add_zero_linear(store, base + ".adaln_b", cfg.d_cond, cfg.d_model);
    add_linear(store, base + ".q", cfg.d_model, cfg.d_model, rng);
    add_linear(store, base + ".k", cfg.d_model, cfg.d_model, rng);
    add_linear(store, base + ".v", cfg.d_model, cfg.d_model, rng);
    add_linear(store, base + ".out", cfg.d_model, cfg.d_model, rng);
    add_linear(store, base + ".ffn1", cfg.d_model, cfg.d_ff, rng);
    add_linear(store, base + ".ffn2", cfg.d_ff, cfg.d_model, rng);
  }
  add_linear(store, prefix + ".edge_hidden", cfg.d_model, cfg.d_model, rng);
  // Zero heads give exactly uniform logits before any training.
  add_zero_linear(store, prefix + ".head_node", cfg.d_model, kNodeCategories);
  add_zero_linear(store, prefix + ".head_edge", cfg.d_model, kEdgeCategories);
}

DenoiseTensors denoise_node(TapeBinder& bind, const DenoiserConfig& cfg,
                            const CategoricalGraphState& state, int t, ad::Tensor cond,
                            const std::string& prefix) {
  check_config(cfg);
  const int n = state.n;
  if (n < 1) throw data_error("denoise: empty graph state");
  if (t < 1 || t > cfg.max_steps) {
    throw numerical_error("denoise: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(cfg.max_steps) + "]");
  }
  if (cond.rows() != 1 || cond.cols() != cfg.d_cond) {
    throw data_error("denoise: condition shape " + std::to_string(cond.rows()) + "x" +
                     std::to_string(cond.cols()) + ", expected 1x" + std::to_string(cfg.d_cond));
  }
  ad::Tape& tape = *cond.tape;
  ad::Tensor x_node = tape.constant(n, kNodeCategories, state.node);
  ad::Tensor x_edge =
      tape.constant(static_cast<long>(n) * n, kEdgeCategories, state.edge);

  ad::Tensor h = linear(bind, x_node, prefix + ".node_in");
  const int t_index[] = {t};
  h = ad::add(h, ad::embedding(bind(prefix + ".t_embed"), t_index));

  // One n x n additive score bias per head, shared by all blocks.
  ad::Tensor bias_all = ad::matmul(x_edge, bind(prefix + ".edge_bias.w"));
  std::vector<ad::Tensor> bias_heads;
  bias_heads.reserve(static_cast<size_t>(cfg.num_heads));
  for (int hd = 0; hd < cfg.num_heads; ++hd) {
    bias_heads.push_back(ad::reshape(ad::slice(bias_all, 1, hd, 1), n, n));
  }

  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = block_name(prefix, b);
    ad::Tensor gamma = ad::add_scalar(linear(bind, cond, base + ".adaln_g"), 1.0);
    ad::Tensor beta = linear(bind, cond, base + ".adaln_b");
    h = ad::add(ad::mul(ad::layernorm(h, 1), gamma), beta);
    h = ad::layernorm(ad::add(h, biased_self_attention(bind, h, bias_heads, cfg.num_heads, base)),
                      1);
    ad::Tensor f = linear(bind, ad::relu(linear(bind, h, base + ".ffn1")), base + ".ffn2");
    h = ad::layernorm(ad::add(h, f), 1);
  }

  ad::Tensor node_logits = linear(bind, h, prefix + ".head_node");

  // Pair features: endpoint node features plus the embedded input edge
  // category, scored per ordered pair and then averaged with the transposed
  // pair so the logits come out symmetric.
  std::vector<int> idx_i(static_cast<size_t>(n) * n);
  std::vector<int> idx_j(static_cast<size_t>(n) * n);
  std::vector<int> idx_transpose(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      idx_i[static_cast<size_t>(i) * n + j] = i;
      idx_j[static_cast<size_t>(i) * n + j] = j;
      idx_transpose[static_cast<size_t>(i) * n + j] = j * n + i;
    }
  }
  ad::Tensor pair = ad::add(ad::add(ad::embedding(h, idx_i), ad::embedding(h, idx_j)),
                            linear(bind, x_edge, prefix + ".edge_in"));
  ad::Tensor hidden = ad::relu(linear(bind, pair, prefix + ".edge_hidden"));
  ad::Tensor raw = linear(bind, hidden, prefix + ".head_edge");
  ad::Tensor edge_logits = ad::scale(ad::add(raw, ad::embedding(raw, idx_transpose)), 0.5);
  return {node_logits, edge_logits};
}

DenoiseLogits denoise(const CategoricalGraphState& state, int t, std::span<const double> cond,
                      ParamStore& store, const DenoiserConfig& cfg, const std::string& prefix) {
  check_config(cfg);
  if (static_cast<long>(cond.size()) != cfg.d_cond) {
    throw data_error("denoise: condition width " + std::to_string(cond.size()) + ", expected " +
                     std::to_string(cfg.d_cond));
  }
  for (double v : cond) {
    if (!std::isfinite(v)) throw data_error("denoise: non-finite condition value");
  }
  check_state_one_hot(state);
  ad::Tape tape;
  TapeBinder bind(tape, store);
  DenoiseTensors out =
      denoise_node(bind, cfg, state, t, tape.constant(1, cfg.d_cond, cond), prefix);
  DenoiseLogits logits;
  auto node = out.node_logits.value();
  auto edge = out.edge_logits.value();
  logits.node.assign(node.begin(), node.end());
  logits.edge.assign(edge.begin(), edge.end());
  return logits;
}

DenoiserFn make_denoiser_fn(ParamStore& store, const DenoiserConfig& cfg,
                            const std::string& prefix, const std::string& uncond_param) {
  check_config(cfg);
  return [&store, cfg, prefix, uncond_param](const CategoricalGraphState& state, int t,
                                             const std::optional<std::vector<double>>& cond) {
    if (cond) return denoise(state, t, *cond, store, cfg, prefix);
    const auto& drop = store.get(uncond_param);
    return denoise(state, t, drop.value, store, cfg, prefix);
  };
}

TrainStepResult train_step(std::span<const TrainItem> batch, ParamStore& store,
                           const DenoiserConfig& cfg, const NoiseSchedule& sched, Adam& opt,
                           uint64_t rng_seed, const TrainConfig& tcfg, const std::string& prefix,
                           const std::string& cond_prefix) {
  check_config(cfg);
  if (batch.empty()) throw data_error("train_step: empty batch");
  if (sched.steps < 1) throw config_error("train_step: schedule has no steps");
  if (sched.steps > cfg.max_steps) {
    throw config_error("train_step: schedule has " + std::to_string(sched.steps) +
                       " steps but the timestep table holds " + std::to_string(cfg.max_steps));
  }
  if (tcfg.cond_drop_p < 0.0 || tcfg.cond_drop_p > 1.0) {
    throw config_error("train_step: drop probability outside [0, 1]");
  }
  if (!(tcfg.cond_noise_sigma >= 0.0)) {
    throw config_error("train_step: negative condition noise");
  }

  ad::Tape tape;
  TapeBinder bind(tape, store);
  std::vector<ad::Tensor> node_terms;
  std::vector<ad::Tensor> edge_terms;
  for (size_t item = 0; item < batch.size(); ++item) {
    const TrainItem& it = batch[item];
    if (it.graph.num_atoms() == 0) throw data_error("train_step: empty graph in batch");
    if (!is_valid(it.graph)) throw data_error("train_step: invalid graph in batch");
    CategoricalGraphState x0 = state_from_graph(it.graph);
    Rng item_rng(Rng::derive(rng_seed, "denoiser/train_item", item));
    const int t = 1 + static_cast<int>(item_rng.uniform_int(static_cast<uint64_t>(sched.steps)));
    CategoricalGraphState xt =
        forward_sample(x0, t, sched, Rng::derive(rng_seed, "denoiser/train_noise", item));

    const bool dropped = item_rng.bernoulli(tcfg.cond_drop_p);
    ad::Tensor z = tape.constant(1, static_cast<long>(it.z.size()), it.z);
    ad::Tensor cond = tfe::condition_node(bind, z, dropped, cond_prefix);
    if (cond.cols() != cfg.d_cond) {
      throw data_error("train_step: condition width " + std::to_string(cond.cols()) +
                       ", expected " + std::to_string(cfg.d_cond));
    }
    if (tcfg.cond_noise_sigma > 0.0) {
      std::vector<double> noise(static_cast<size_t>(cond.cols()));
      for (double& v : noise) v = tcfg.cond_noise_sigma * item_rng.normal();
      cond = ad::add(cond, tape.constant(1, cond.cols(), noise));
    }

    DenoiseTensors logits = denoise_node(bind, cfg, xt, t, cond, prefix);
    const int n = x0.n;
    std::vector<int> node_targets(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) node_targets[static_cast<size_t>(i)] = x0.node_argmax(i);
    node_terms.push_back(ad::cross_entropy(logits.node_logits, node_targets));
    if (n >= 2) {
      std::vector<int> off_diag;
      std::vector<int> edge_targets;
      off_diag.reserve(static_cast<size_t>(n) * (n - 1));
      edge_targets.reserve(static_cast<size_t>(n) * (n - 1));
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          off_diag.push_back(i * n + j);
          edge_targets.push_back(x0.edge_argmax(i, j));
        }
      }
      edge_terms.push_back(
          ad::cross_entropy(ad::embedding(logits.edge_logits, off_diag), edge_targets));
    }
  }

  // Each component averages over the items that can contribute to it, so a
  // batch with single-atom molecules still starts at exactly log(K) per head.
  auto item_mean = [&](const std::vector<ad::Tensor>& terms) {
    if (terms.empty()) return tape.zeros(1, 1);
    ad::Tensor s = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) s = ad::add(s, terms[i]);
    return ad::scale(s, 1.0 / static_cast<double>(terms.size()));
  };
  ad::Tensor node_loss = item_mean(node_terms);
  ad::Tensor edge_loss = item_mean(edge_terms);
  ad::Tensor total = ad::add(node_loss, edge_loss);
  const double loss_value = total.value()[0];
  if (!std::isfinite(loss_value)) {
    throw numerical_error("train_step: non-finite loss, training diverged");
  }
  tape.backward(total);
  opt.step(store, bind);
  return {loss_value, node_loss.value()[0], edge_loss.value()[0]};
}

}  // namespace moldiff
