//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/tfe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace moldiff::tfe {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw data_error(std::string(what) + ": non-finite value");
}

ad::Tensor lift(ad::Tape& tape, const RowMatrix& m) {
  return tape.constant(m.rows, m.cols, {m.data.data(), m.data.size()});
}

}  // namespace

// --- domain types ------------------------------------------------------------

Phase phase_from_name(std::string_view name) {
  if (name == "G1") return Phase::kG1;
  if (name == "S") return Phase::kS;
  if (name == "G2M" || name == "G2/M") return Phase::kG2M;
  throw data_error("unknown cell-cycle phase: " + std::string(name));
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kG1: return "G1";
    case Phase::kS: return "S";
    case Phase::kG2M: return "G2M";
  }
  throw data_error("invalid phase tag");
}

// --- heterogeneity-aware aggregation -----------------------------------------

std::vector<long> largest_remainder_allocation(std::span<const long> weights, long total) {
  if (weights.empty()) throw data_error("allocation: no weights");
  if (total < 0) throw config_error("allocation: negative seat total");
  long weight_sum = 0;
  for (long w : weights) {
    if (w < 0) throw data_error("allocation: negative weight");
    weight_sum += w;
  }
  std::vector<long> seats(weights.size(), 0);
  if (total == 0) return seats;
  if (weight_sum == 0) throw data_error("allocation: all weights zero");

  // Integer arithmetic keeps quotas exact: seat_i = floor(total*w_i / W) plus
  // leftover seats by descending remainder, earliest index first on ties.
  long assigned = 0;
  std::vector<std::pair<long, size_t>> remainders;
  remainders.reserve(weights.size());
  for (size_t i = 0; i < weights.size(); ++i) {
    const long product = total * weights[i];
    seats[i] = product / weight_sum;
    assigned += seats[i];
    remainders.emplace_back(product % weight_sum, i);
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const std::pair<long, size_t>& a, const std::pair<long, size_t>& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (long extra = 0; extra < total - assigned; ++extra) ++seats[remainders[extra].second];
  return seats;
}

ExpressionProfile aggregate(const CellPopulation& pop, uint64_t rng_seed, long n_rows) {
  const long n = pop.embeddings.rows;
  const long d = pop.embeddings.cols;
  if (n < 1 || d < 1) throw data_error("aggregate: empty population");
  if (static_cast<long>(pop.phase_labels.size()) != n ||
      static_cast<long>(pop.cluster_labels.size()) != n)
    throw data_error("aggregate: label arrays must match the cell count");
  if (n_rows < 1) throw config_error("aggregate: output row count must be positive");
  require_finite({pop.embeddings.data.data(), pop.embeddings.data.size()}, "aggregate");

  std::array<long, kNumPhases> phase_counts{};
  for (Phase p : pop.phase_labels) ++phase_counts[static_cast<int>(p)];
  const std::vector<long> seats =
      largest_remainder_allocation({phase_counts.data(), phase_counts.size()}, n_rows);

  Rng rng(Rng::derive(rng_seed, "tfe/aggregate"));
  ExpressionProfile out;
  out.matrix = RowMatrix(n_rows, d);
  out.resolution = Resolution::kSingleCell;
  long next_row = 0;
  for (int p = 0; p < kNumPhases; ++p) {
    const long allocation = seats[static_cast<size_t>(p)];
    if (allocation == 0) continue;

    // Mean-pool cells within each (phase, cluster) group; std::map keeps the
    // group order keyed by cluster id, independent of cell order.
    std::map<int, std::pair<std::vector<double>, long>> groups;
    for (long i = 0; i < n; ++i) {
      if (static_cast<int>(pop.phase_labels[i]) != p) continue;
      auto& g = groups[pop.cluster_labels[i]];
      if (g.first.empty()) g.first.assign(static_cast<size_t>(d), 0.0);
      for (long c = 0; c < d; ++c) g.first[static_cast<size_t>(c)] += pop.embeddings.at(i, c);
      ++g.second;
    }
    std::vector<std::vector<double>> means;
    means.reserve(groups.size());
    for (auto& [cluster, g] : groups) {
      for (double& v : g.first) v /= static_cast<double>(g.second);
      means.push_back(std::move(g.first));
    }

    // A zero-count phase never receives seats, so means is non-empty here.
    const long group_count = static_cast<long>(means.size());
    std::vector<long> picks;
    picks.reserve(static_cast<size_t>(allocation));
    if (group_count < allocation) {
      for (long s = 0; s < allocation; ++s)
        picks.push_back(static_cast<long>(rng.uniform_int(static_cast<uint64_t>(group_count))));
    } else {
      // Without replacement: partial Fisher-Yates over the group indices.
      std::vector<long> order(static_cast<size_t>(group_count));
      std::iota(order.begin(), order.end(), 0L);
      for (long s = 0; s < allocation; ++s) {
        const long j =
            s + static_cast<long>(rng.uniform_int(static_cast<uint64_t>(group_count - s)));
        std::swap(order[static_cast<size_t>(s)], order[static_cast<size_t>(j)]);
        picks.push_back(order[static_cast<size_t>(s)]);
      }
    }
    for (long pick : picks) {
      const auto& v = means[static_cast<size_t>(pick)];
      for (long c = 0; c < d; ++c) out.matrix.at(next_row, c) = v[static_cast<size_t>(c)];
      ++next_row;
    }
  }
  return out;
}

// --- bidirectional interaction ------------------------------------------------

namespace {

void check_interact_config(const InteractConfig& cfg) {
  if (cfg.d_in < 1 || cfg.d_model < 1) throw config_error("interact: dimensions must be positive");
  if (cfg.num_heads < 1 || cfg.d_model % cfg.num_heads != 0)
    throw config_error("interact: head count must divide the model width");
  if (cfg.num_blocks < 1) throw config_error("interact: at least one block required");
}

void add_attention_params(ParamStore& store, const std::string& prefix, long d_model, Rng& rng) {
  add_linear(store, prefix + ".q", d_model, d_model, rng);
  add_linear(store, prefix + ".k", d_model, d_model, rng);
  add_linear(store, prefix + ".v", d_model, d_model, rng);
  add_linear(store, prefix + ".out", d_model, d_model, rng);
}

// Scaled dot-product attention with residual connection and layernorm. The
// residual reads the query stream, so cross-attention updates the stream it
// is queried from.
ad::Tensor attention_sublayer(TapeBinder& bind, ad::Tensor q_in, ad::Tensor kv_in,
                              const InteractConfig& cfg, const std::string& prefix) {
  const long head_dim = cfg.d_model / cfg.num_heads;
  ad::Tensor q = linear(bind, q_in, prefix + ".q");
  ad::Tensor k = linear(bind, kv_in, prefix + ".k");
  ad::Tensor v = linear(bind, kv_in, prefix + ".v");
  std::vector<ad::Tensor> heads;
  heads.reserve(static_cast<size_t>(cfg.num_heads));
  for (int h = 0; h < cfg.num_heads; ++h) {
    ad::Tensor qh = ad::slice(q, 1, h * head_dim, head_dim);
    ad::Tensor kh = ad::slice(k, 1, h * head_dim, head_dim);
    ad::Tensor vh = ad::slice(v, 1, h * head_dim, head_dim);
    ad::Tensor scores =
        ad::scale(ad::matmul(qh, kh, false, true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    heads.push_back(ad::matmul(ad::softmax(scores, 1), vh));
  }
  ad::Tensor merged = ad::concat(heads, 1);
  ad::Tensor projected = linear(bind, merged, prefix + ".out");
  return ad::layernorm(ad::add(q_in, projected), 1);
}

}  // namespace

void add_interact_params(ParamStore& store, const InteractConfig& cfg, Rng& rng,
                         const std::string& prefix) {
  check_interact_config(cfg);
  add_linear(store, prefix + ".in", cfg.d_in, cfg.d_model, rng);
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = prefix + ".block" + std::to_string(b);
    add_attention_params(store, base + ".cross_pre", cfg.d_model, rng);
    add_attention_params(store, base + ".cross_post", cfg.d_model, rng);
    add_attention_params(store, base + ".self_pre", cfg.d_model, rng);
    add_attention_params(store, base + ".self_post", cfg.d_model, rng);
  }
  add_attention_params(store, prefix + ".fusion", cfg.d_model, rng);
}

ad::Tensor interact_node(TapeBinder& bind, const InteractConfig& cfg, ad::Tensor t_pre,
                         ad::Tensor t_post, const std::string& prefix) {
  check_interact_config(cfg);
  if (t_pre.rows() != t_post.rows() || t_pre.cols() != t_post.cols())
    throw data_error("interact: profile shapes must match");
  if (t_pre.cols() != cfg.d_in) throw data_error("interact: profile width mismatch");
  if (t_pre.rows() < 1) throw data_error("interact: empty profile");

  ad::Tensor pre = linear(bind, t_pre, prefix + ".in");
  ad::Tensor post = linear(bind, t_post, prefix + ".in");
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string base = prefix + ".block" + std::to_string(b);
    // Both cross-attentions read the block inputs, then each stream
    // self-attends; the update is symmetric across streams.
    ad::Tensor pre_cross = attention_sublayer(bind, pre, post, cfg, base + ".cross_pre");
    ad::Tensor post_cross = attention_sublayer(bind, post, pre, cfg, base + ".cross_post");
    pre = attention_sublayer(bind, pre_cross, pre_cross, cfg, base + ".self_pre");
    post = attention_sublayer(bind, post_cross, post_cross, cfg, base + ".self_post");
  }
  const std::array<ad::Tensor, 2> streams{pre, post};
  ad::Tensor fused_in = ad::concat({streams.data(), streams.size()}, 0);
  ad::Tensor fused = attention_sublayer(bind, fused_in, fused_in, cfg, prefix + ".fusion");
  return ad::mean(fused, 0);
}

PerturbationEmbedding interact(const ExpressionProfile& pre, const ExpressionProfile& post,
                               ParamStore& store, const InteractConfig& cfg,
                               const std::string& prefix) {
  require_finite({pre.matrix.data.data(), pre.matrix.data.size()}, "interact");
  require_finite({post.matrix.data.data(), post.matrix.data.size()}, "interact");
  ad::Tape tape;
  TapeBinder bind(tape, store);
  ad::Tensor z = interact_node(bind, cfg, lift(tape, pre.matrix), lift(tape, post.matrix), prefix);
  auto value = z.value();
  PerturbationEmbedding out;
  out.z.assign(value.begin(), value.end());
  return out;
}

// --- alignment losses -----------------------------------------------------------

namespace {

ad::Tensor normalize_rows(ad::Tensor a) {
  return ad::div(a, ad::sqrt(ad::sum(ad::mul(a, a), 1)));
}

void check_loss_pair(ad::Tensor pred, ad::Tensor target, const char* what) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw data_error(std::string(what) + ": shape mismatch");
  if (pred.rows() < 1 || pred.cols() < 1) throw data_error(std::string(what) + ": empty batch");
  require_finite(pred.value(), what);
  for (double v : target.value())
    if (!std::isfinite(v) || v < 0.0)
      throw data_error(std::string(what) + ": targets must be finite and non-negative");
}

}  // namespace

ad::Tensor contrast_loss_node(ad::Tensor pred, ad::Tensor target,
                              std::span<const std::string> labels, double tau, double lambda) {
  check_loss_pair(pred, target, "contrast_loss");
  const long rows = pred.rows();
  const long cols = pred.cols();
  if (static_cast<long>(labels.size()) != rows)
    throw data_error("contrast_loss: one label per row required");
  if (!(tau > 0.0)) throw config_error("contrast_loss: tau must be positive");
  if (lambda < 0.0) throw config_error("contrast_loss: lambda must be non-negative");

  const auto pv = pred.value();
  const auto tv = target.value();
  for (long r = 0; r < rows; ++r) {
    double pred_sq = 0.0;
    double target_sq = 0.0;
    for (long c = 0; c < cols; ++c) {
      const double p = pv[static_cast<size_t>(r * cols + c)];
      const double t = tv[static_cast<size_t>(r * cols + c)];
      pred_sq += p * p;
      target_sq += t * t;
    }
    if (pred_sq == 0.0 || target_sq == 0.0)
      throw data_error("contrast_loss: zero-norm row " + std::to_string(r));
  }

  ad::Tensor pred_n = normalize_rows(pred);
  ad::Tensor target_n = normalize_rows(target);
  ad::Tensor sim = ad::scale(ad::matmul(pred_n, target_n, false, true), 1.0 / tau);

  // Off-diagonal pairs with equal labels are duplicates of the positive and
  // must not act as negatives.
  std::vector<uint8_t> same(static_cast<size_t>(rows * rows), 0);
  bool any_same = false;
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < rows; ++j)
      if (i != j && labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)]) {
        same[static_cast<size_t>(i * rows + j)] = 1;
        any_same = true;
      }
  if (any_same) sim = ad::masked_fill(sim, same, -1e30);

  std::vector<int> diagonal(static_cast<size_t>(rows));
  std::iota(diagonal.begin(), diagonal.end(), 0);
  ad::Tensor loss = ad::cross_entropy(sim, diagonal);

  if (lambda > 0.0) {
    // Sparsity penalty on normalized predictions at zero-target positions.
    std::vector<uint8_t> nonzero(static_cast<size_t>(rows * cols), 0);
    for (size_t i = 0; i < nonzero.size(); ++i) nonzero[i] = tv[i] != 0.0 ? 1 : 0;
    ad::Tensor kept = ad::masked_fill(pred_n, nonzero, 0.0);
    loss = ad::add(loss, ad::scale(ad::mean_all(ad::mul(kept, kept)), lambda));
  }
  return loss;
}

double contrast_loss(const RowMatrix& pred, const RowMatrix& target,
                     std::span<const std::string> labels, double tau, double lambda) {
  ad::Tape tape;
  return contrast_loss_node(lift(tape, pred), lift(tape, target), labels, tau, lambda).value()[0];
}

ad::Tensor regression_loss_node(ad::Tensor pred, ad::Tensor target, double alpha) {
  check_loss_pair(pred, target, "regression_loss");
  const long rows = pred.rows();
  const long cols = pred.cols();
  const auto tv = target.value();

  long positive_count = 0;
  std::vector<double> weights(static_cast<size_t>(rows * cols), 0.0);
  std::vector<uint8_t> positive(static_cast<size_t>(rows * cols), 0);
  for (size_t i = 0; i < weights.size(); ++i)
    if (tv[i] > 0.0) {
      weights[i] = std::log1p(tv[i]);
      positive[i] = 1;
      ++positive_count;
    }
  const double negative_count = static_cast<double>(rows * cols - positive_count);

  ad::Tape& tape = *pred.tape;
  ad::Tensor weight = tape.constant(rows, cols, weights);
  ad::Tensor diff = ad::sub(pred, target);
  ad::Tensor positive_term = ad::scale(ad::sum_all(ad::mul(weight, ad::mul(diff, diff))),
                                       1.0 / (static_cast<double>(positive_count) + 1e-8));
  ad::Tensor masked_pred = ad::masked_fill(pred, positive, 0.0);
  ad::Tensor negative_term =
      ad::scale(ad::sum_all(ad::mul(masked_pred, masked_pred)), 1.0 / (negative_count + 1e-8));
  return ad::add(positive_term, ad::scale(negative_term, alpha));
}

double regression_loss(const RowMatrix& pred, const RowMatrix& target, double alpha) {
  ad::Tape tape;
  return regression_loss_node(lift(tape, pred), lift(tape, target), alpha).value()[0];
}

ad::Tensor local_loss_node(ad::Tensor pred, ad::Tensor target,
                           std::span<const std::string> labels, double tau, double lambda,
                           double alpha) {
  return ad::add(regression_loss_node(pred, target, alpha),
                 contrast_loss_node(pred, target, labels, tau, lambda));
}

double local_loss(const RowMatrix& pred, const RowMatrix& target,
                  std::span<const std::string> labels, double tau, double lambda, double alpha) {
  ad::Tape tape;
  return local_loss_node(lift(tape, pred), lift(tape, target), labels, tau, lambda, alpha)
      .value()[0];
}

ad::Tensor global_loss_node(ad::Tensor mu_enc, ad::Tensor var_enc, ad::Tensor mu_f,
                            ad::Tensor var_f, ad::Tensor recon, ad::Tensor kl, double lambda_kl) {
  if (mu_enc.rows() != mu_f.rows() || mu_enc.cols() != mu_f.cols())
    throw data_error("global_loss: mean shape mismatch");
  if (var_enc.rows() != var_f.rows() || var_enc.cols() != var_f.cols())
    throw data_error("global_loss: variance shape mismatch");
  if (recon.numel() != 1 || kl.numel() != 1)
    throw data_error("global_loss: recon and kl must be scalars");
  for (ad::Tensor v : {var_enc, var_f})
    for (double x : v.value())
      if (!(x > 0.0)) throw data_error("global_loss: non-positive variance");

  ad::Tensor d_mu = ad::sub(mu_enc, mu_f);
  ad::Tensor d_var = ad::sub(var_enc, var_f);
  ad::Tensor align = ad::add(ad::sum_all(ad::mul(d_mu, d_mu)), ad::sum_all(ad::mul(d_var, d_var)));
  ad::Tensor elbo = ad::add(recon, ad::scale(kl, lambda_kl));
  return ad::add(elbo, align);
}

double global_loss(std::span<const double> mu_enc, std::span<const double> var_enc,
                   std::span<const double> mu_f, std::span<const double> var_f, double recon,
                   double kl, double lambda_kl) {
  ad::Tape tape;
  auto row = [&tape](std::span<const double> s) {
    return tape.constant(1, static_cast<long>(s.size()), s);
  };
  return global_loss_node(row(mu_enc), row(var_enc), row(mu_f), row(var_f),
                          tape.full(1, 1, recon), tape.full(1, 1, kl), lambda_kl)
      .value()[0];
}

double tfe_total_loss(double global_term, double local_term, double gamma) {
  return global_term + gamma * local_term;
}

ad::Tensor tfe_total_loss_node(ad::Tensor global_term, ad::Tensor local_term, double gamma) {
  return ad::add(global_term, ad::scale(local_term, gamma));
}

// --- conditioning -----------------------------------------------------------------

void add_condition_params(ParamStore& store, long d_z, long d_c, Rng& rng,
                          const std::string& prefix) {
  if (d_z < 1 || d_c < 1) throw config_error("condition: dimensions must be positive");
  add_linear(store, prefix + ".embed", d_z, d_c, rng);
  store.add(prefix + ".e_drop", 1, d_c, init_normal(rng, 0.02));
}

ad::Tensor condition_node(TapeBinder& bind, ad::Tensor z, bool dropped,
                          const std::string& prefix) {
  if (dropped) return bind(prefix + ".e_drop");
  return linear(bind, z, prefix + ".embed");
}

ConditionEmbedding condition_dropout(const PerturbationEmbedding& z, ParamStore& store, double p,
                                     double noise_sigma, uint64_t rng_seed,
                                     const std::string& prefix) {
  if (!(p >= 0.0 && p <= 1.0)) throw config_error("condition_dropout: p must lie in [0, 1]");
  if (noise_sigma < 0.0) throw config_error("condition_dropout: negative noise width");
  require_finite(z.z, "condition_dropout");

  Rng rng(Rng::derive(rng_seed, "tfe/cond_drop"));
  const bool dropped = rng.bernoulli(p);

  ConditionEmbedding out;
  if (dropped) {
    const auto& drop_vec = store.get(prefix + ".e_drop");
    out.value = drop_vec.value;
    out.provenance = ConditionProvenance::kDropped;
  } else {
    const auto& w = store.get(prefix + ".embed.w");
    const auto& b = store.get(prefix + ".embed.b");
    if (static_cast<long>(z.z.size()) != w.rows)
      throw data_error("condition_dropout: embedding width mismatch");
    out.value.assign(static_cast<size_t>(w.cols), 0.0);
    for (long c = 0; c < w.cols; ++c) {
      double acc = b.value[static_cast<size_t>(c)];
      for (long r = 0; r < w.rows; ++r)
        acc += z.z[static_cast<size_t>(r)] * w.value[static_cast<size_t>(r * w.cols + c)];
      out.value[static_cast<size_t>(c)] = acc;
    }
    out.provenance = ConditionProvenance::kConditioned;
  }
  if (noise_sigma > 0.0)
    for (double& v : out.value) v += rng.normal() * noise_sigma;
  return out;
}

// --- latent heads and the fingerprint autoencoder stub ------------------------------

void add_latent_head_params(ParamStore& store, long d_z, long d_latent, Rng& rng,
                            const std::string& prefix) {
  if (d_z < 1 || d_latent < 1) throw config_error("latent head: dimensions must be positive");
  add_linear(store, prefix + ".mu", d_z, d_latent, rng);
  add_linear(store, prefix + ".logvar", d_z, d_latent, rng);
}

LatentStats latent_head(TapeBinder& bind, ad::Tensor z, const std::string& prefix) {
  return {linear(bind, z, prefix + ".mu"), ad::exp(linear(bind, z, prefix + ".logvar"))};
}

void add_vae_params(ParamStore& store, const VaeConfig& cfg, Rng& rng,
                    const std::string& prefix) {
  if (cfg.d_in < 1 || cfg.d_hidden < 1 || cfg.d_latent < 1)
    throw config_error("vae: dimensions must be positive");
  add_linear(store, prefix + ".enc", cfg.d_in, cfg.d_hidden, rng);
  add_linear(store, prefix + ".mu", cfg.d_hidden, cfg.d_latent, rng);
  add_linear(store, prefix + ".logvar", cfg.d_hidden, cfg.d_latent, rng);
  add_linear(store, prefix + ".dec1", cfg.d_latent, cfg.d_hidden, rng);
  add_linear(store, prefix + ".dec2", cfg.d_hidden, cfg.d_in, rng);
}

VaeOutputs vae_stub_elbo(TapeBinder& bind, const VaeConfig& cfg, ad::Tensor x,
                         uint64_t noise_seed, const std::string& prefix) {
  if (x.cols() != cfg.d_in) throw data_error("vae_stub_elbo: input width mismatch");
  if (x.rows() < 1) throw data_error("vae_stub_elbo: empty batch");
  require_finite(x.value(), "vae_stub_elbo");
  const long rows = x.rows();

  ad::Tensor hidden = ad::relu(linear(bind, x, prefix + ".enc"));
  ad::Tensor mu = linear(bind, hidden, prefix + ".mu");
  ad::Tensor var = ad::exp(linear(bind, hidden, prefix + ".logvar"));

  // Reparameterized latent sample with externally seeded noise.
  Rng rng(Rng::derive(noise_seed, "tfe/vae_eps"));
  std::vector<double> noise(static_cast<size_t>(rows * cfg.d_latent));
  for (double& e : noise) e = rng.normal();
  ad::Tensor eps = x.tape->constant(rows, cfg.d_latent, noise);
  ad::Tensor latent = ad::add(mu, ad::mul(ad::sqrt(var), eps));

  ad::Tensor decoded = linear(bind, ad::relu(linear(bind, latent, prefix + ".dec1")),
                              prefix + ".dec2");
  ad::Tensor diff = ad::sub(decoded, x);
  ad::Tensor recon = ad::scale(ad::sum_all(ad::mul(diff, diff)), 1.0 / static_cast<double>(rows));

  // Closed-form KL to the unit Gaussian, averaged over the batch.
  ad::Tensor kl_terms = ad::sub(ad::add_scalar(ad::add(ad::mul(mu, mu), var), -1.0), ad::log(var));
  ad::Tensor kl = ad::scale(ad::sum_all(kl_terms), 0.5 / static_cast<double>(rows));
  return {recon, kl, mu, var};
}

double gaussian_kl(const RowMatrix& mu, const RowMatrix& var) {
  if (mu.rows != var.rows || mu.cols != var.cols)
    throw data_error("gaussian_kl: shape mismatch");
  if (mu.rows < 1) throw data_error("gaussian_kl: empty input");
  double total = 0.0;
  for (size_t i = 0; i < mu.data.size(); ++i) {
    const double v = var.data[i];
    if (!(v > 0.0)) throw data_error("gaussian_kl: non-positive variance");
    total += mu.data[i] * mu.data[i] + v - 1.0 - std::log(v);
  }
  return 0.5 * total / static_cast<double>(mu.rows);
}

}  // namespace moldiff::tfe
