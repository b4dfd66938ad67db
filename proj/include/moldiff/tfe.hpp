//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_TFE_HPP_
#define MOLDIFF_TFE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moldiff/autodiff.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/params.hpp"
#include "moldiff/rng.hpp"

namespace moldiff::tfe {

// Transcriptome feature extraction: collapses labeled single-cell embedding
// populations into fixed-size expression profiles, runs a bidirectional
// attention interaction between pre- and post-perturbation profiles, and
// defines the alignment losses that train the extractor. Everything
// differentiable is expressed on the autodiff tape; plain-value wrappers are
// provided where callers only need numbers.

// --- domain types ------------------------------------------------------------

// Dense row-major matrix with explicit dimensions; the exchange type for
// profiles and loss inputs.
struct RowMatrix {
  long rows = 0;
  long cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  RowMatrix() = default;
  RowMatrix(long r, long c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0) {}

  double& at(long r, long c) { return data[static_cast<size_t>(r * cols + c)]; }
  double at(long r, long c) const { return data[static_cast<size_t>(r * cols + c)]; }
  std::span<const double> row(long r) const {
    return {data.data() + static_cast<size_t>(r * cols), static_cast<size_t>(cols)};
  }
};

enum class Resolution { kBulk, kSingleCell };

// A gene-expression state: one row for bulk measurements, a fixed number of
// representative rows after single-cell aggregation.
struct ExpressionProfile {
  RowMatrix matrix;
  Resolution resolution = Resolution::kBulk;
};

// Cell-cycle phase tags. Order matters: proportional seat allocation breaks
// ties in this declaration order.
enum class Phase { kG1 = 0, kS = 1, kG2M = 2 };
inline constexpr int kNumPhases = 3;

// Accepts "G1", "S", "G2M" (also "G2/M"); throws a data error otherwise.
Phase phase_from_name(std::string_view name);
const char* phase_name(Phase p);

// Externally produced per-cell embeddings with phase and cluster labels.
struct CellPopulation {
  RowMatrix embeddings;             // n x d_emb
  std::vector<Phase> phase_labels;  // length n
  std::vector<int> cluster_labels;  // length n
};

struct PerturbationEmbedding {
  std::vector<double> z;
};

enum class ConditionProvenance { kConditioned, kDropped };

struct ConditionEmbedding {
  std::vector<double> value;
  ConditionProvenance provenance = ConditionProvenance::kConditioned;
};

// --- heterogeneity-aware aggregation -----------------------------------------

// Apportions `total` seats across non-negative integer weights proportionally,
// assigning leftover seats by largest fractional remainder; ties go to the
// earliest index. Exact integer arithmetic throughout.
std::vector<long> largest_remainder_allocation(std::span<const long> weights, long total);

// Collapses a labeled population to exactly `n_rows` representative vectors:
// seats are split across phases in proportion to phase counts, cells are
// mean-pooled within each (phase, cluster) group, and a phase's seats are
// filled by sampling its pooled vectors, with replacement only when the phase
// has fewer groups than seats. Output rows therefore always lie in the convex
// hull of the input embeddings.
ExpressionProfile aggregate(const CellPopulation& pop, uint64_t rng_seed, long n_rows = 128);

// --- bidirectional interaction ------------------------------------------------

struct InteractConfig {
  long d_in = 128;     // feature width of both input profiles
  long d_model = 128;  // attention width; also the output embedding width
  int num_heads = 4;
  int num_blocks = 3;
};

// Registers all interaction parameters under `prefix`.
void add_interact_params(ParamStore& store, const InteractConfig& cfg, Rng& rng,
                         const std::string& prefix = "tfe");

// Tape-level forward. Inputs are N x d_in nodes with identical shapes; the
// result is the 1 x d_model embedding obtained by running `num_blocks`
// interaction blocks (each stream cross-attends to the other, then
// self-attends; residual + layernorm around every attention), concatenating
// the streams along the token axis, fusing with one more self-attention, and
// mean-pooling over tokens.
ad::Tensor interact_node(TapeBinder& bind, const InteractConfig& cfg, ad::Tensor t_pre,
                         ad::Tensor t_post, const std::string& prefix = "tfe");

// Value-level forward on a scratch tape.
PerturbationEmbedding interact(const ExpressionProfile& pre, const ExpressionProfile& post,
                               ParamStore& store, const InteractConfig& cfg,
                               const std::string& prefix = "tfe");

// --- alignment losses ----------------------------------------------------------

// InfoNCE over L2-normalized rows: similarity pred_n * target_n^T / tau,
// off-diagonal entries whose labels match are masked out of the negatives,
// cross-entropy against the diagonal. When lambda > 0 adds
// lambda * mean((pred_n  masked to positions where target == 0)^2), with the
// penalty reading the normalized predictions. Throws a data error when any
// row of pred or target has zero norm.
ad::Tensor contrast_loss_node(ad::Tensor pred, ad::Tensor target,
                              std::span<const std::string> labels, double tau = 0.1,
                              double lambda = 0.15);
double contrast_loss(const RowMatrix& pred, const RowMatrix& target,
                     std::span<const std::string> labels, double tau = 0.1,
                     double lambda = 0.15);

// Count-weighted regression: positions with positive targets contribute
// log(1 + target) * (pred - target)^2 averaged over their count; zero-target
// positions contribute pred^2 averaged over their count and scaled by alpha.
ad::Tensor regression_loss_node(ad::Tensor pred, ad::Tensor target, double alpha = 0.4);
double regression_loss(const RowMatrix& pred, const RowMatrix& target, double alpha = 0.4);

// Sum of the regression and contrastive terms over the same batch.
ad::Tensor local_loss_node(ad::Tensor pred, ad::Tensor target,
                           std::span<const std::string> labels, double tau = 0.1,
                           double lambda = 0.15, double alpha = 0.4);
double local_loss(const RowMatrix& pred, const RowMatrix& target,
                  std::span<const std::string> labels, double tau = 0.1, double lambda = 0.15,
                  double alpha = 0.4);

// recon + lambda_kl * kl + ||mu_enc - mu_f||^2 + ||var_enc - var_f||^2.
// Variance tensors must be strictly positive. recon and kl are 1x1 nodes.
ad::Tensor global_loss_node(ad::Tensor mu_enc, ad::Tensor var_enc, ad::Tensor mu_f,
                            ad::Tensor var_f, ad::Tensor recon, ad::Tensor kl,
                            double lambda_kl = 0.1);
double global_loss(std::span<const double> mu_enc, std::span<const double> var_enc,
                   std::span<const double> mu_f, std::span<const double> var_f, double recon,
                   double kl, double lambda_kl = 0.1);

// global + gamma * local.
double tfe_total_loss(double global_term, double local_term, double gamma = 1.0);
ad::Tensor tfe_total_loss_node(ad::Tensor global_term, ad::Tensor local_term,
                               double gamma = 1.0);

// --- conditioning ---------------------------------------------------------------

// Parameters: a linear embedder d_z -> d_c and a learned drop vector of width
// d_c used as the unconditional stand-in.
void add_condition_params(ParamStore& store, long d_z, long d_c, Rng& rng,
                          const std::string& prefix = "cond");

// Tape-level: the embedded condition (1 x d_c), or the learned drop vector
// when `dropped` is set.
ad::Tensor condition_node(TapeBinder& bind, ad::Tensor z, bool dropped,
                          const std::string& prefix = "cond");

// Embeds z, replaces the embedding by the learned drop vector with
// probability p, and adds N(0, noise_sigma^2) noise per coordinate. The
// provenance flag records which branch was taken.
ConditionEmbedding condition_dropout(const PerturbationEmbedding& z, ParamStore& store, double p,
                                     double noise_sigma, uint64_t rng_seed,
                                     const std::string& prefix = "cond");

// --- latent heads and the fingerprint autoencoder stub ---------------------------

// Projects a perturbation embedding to Gaussian latent statistics
// (mu, variance) for the global alignment loss; variance via exp so it stays
// positive.
void add_latent_head_params(ParamStore& store, long d_z, long d_latent, Rng& rng,
                            const std::string& prefix = "tfe_head");

struct LatentStats {
  ad::Tensor mu;   // rows x d_latent
  ad::Tensor var;  // rows x d_latent, strictly positive
};

LatentStats latent_head(TapeBinder& bind, ad::Tensor z, const std::string& prefix = "tfe_head");

struct VaeConfig {
  long d_in = 2048;
  long d_hidden = 256;
  long d_latent = 128;
};

void add_vae_params(ParamStore& store, const VaeConfig& cfg, Rng& rng,
                    const std::string& prefix = "vae");

struct VaeOutputs {
  ad::Tensor recon;  // 1x1: mean over rows of the squared reconstruction error
  ad::Tensor kl;     // 1x1: mean over rows of KL(N(mu, var) || N(0, I))
  ad::Tensor mu;     // b x d_latent
  ad::Tensor var;    // b x d_latent
};

// Small Gaussian autoencoder over fingerprint count vectors; the latent
// sample uses externally seeded noise so a fixed seed gives a deterministic
// loss.
VaeOutputs vae_stub_elbo(TapeBinder& bind, const VaeConfig& cfg, ad::Tensor x,
                         uint64_t noise_seed, const std::string& prefix = "vae");

// Closed-form mean-over-rows KL between N(mu, var) and the unit Gaussian.
double gaussian_kl(const RowMatrix& mu, const RowMatrix& var);

}  // namespace moldiff::tfe

#endif  // MOLDIFF_TFE_HPP_
