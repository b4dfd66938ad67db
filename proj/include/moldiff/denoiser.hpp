//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_DENOISER_HPP_
#define MOLDIFF_DENOISER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moldiff/autodiff.hpp"
#include "moldiff/diffusion.hpp"
#include "moldiff/molgraph.hpp"
#include "moldiff/params.hpp"
#include "moldiff/rng.hpp"

namespace moldiff {

// Graph denoising network: transformer blocks over node features where edge
// categories enter self-attention as additive pairwise logit biases, and the
// condition vector modulates each block through scale/shift of the normalized
// features. Output heads are zero-initialized, so a fresh model emits uniform
// logits over both vocabularies.
struct DenoiserConfig {
  int d_model = 128;
  int num_heads = 4;
  int num_blocks = 2;
  int d_ff = 256;
  int d_cond = 128;   // width of the condition vector fed to every block
  int max_steps = 500;  // capacity of the timestep embedding table
};

// Registers all parameters under `prefix`. Modulation nets and output heads
// start at zero; everything else is scaled normal.
void add_denoiser_params(ParamStore& store, const DenoiserConfig& cfg, Rng& rng,
                         const std::string& prefix = "dn");

struct DenoiseTensors {
  ad::Tensor node_logits;  // n x kNodeCategories
  ad::Tensor edge_logits;  // (n*n) x kEdgeCategories, symmetric in the pair index
};

// Tape-level forward pass; `cond` is a 1 x d_cond tensor so gradients reach
// the condition pipeline. Does not validate one-hot-ness of `state` (tests
// probe relaxed inputs); the value-level wrapper does.
DenoiseTensors denoise_node(TapeBinder& bind, const DenoiserConfig& cfg,
                            const CategoricalGraphState& state, int t, ad::Tensor cond,
                            const std::string& prefix = "dn");

// Value-level forward pass. Validates that every active row of `state` is
// one-hot, 1 <= t <= max_steps, and the condition width. Deterministic.
DenoiseLogits denoise(const CategoricalGraphState& state, int t, std::span<const double> cond,
                      ParamStore& store, const DenoiserConfig& cfg,
                      const std::string& prefix = "dn");

// Wraps the model for the sampler. A nullopt condition is replaced by the
// learned drop vector stored under `uncond_param`, so unconditional queries
// match what the model saw for dropped conditions during training. The store
// reference must outlive the returned function.
DenoiserFn make_denoiser_fn(ParamStore& store, const DenoiserConfig& cfg,
                            const std::string& prefix = "dn",
                            const std::string& uncond_param = "cond.e_drop");

// One training example: a clean molecule and the raw perturbation embedding
// that the condition pipeline turns into the model's condition vector.
struct TrainItem {
  MolecularGraph graph;
  std::vector<double> z;
};

struct TrainConfig {
  double cond_drop_p = 0.1;      // chance of replacing the condition by the drop vector
  double cond_noise_sigma = 0.1;  // stddev of additive noise on the condition
};

struct TrainStepResult {
  double loss = 0.0;       // node_loss + edge_loss
  double node_loss = 0.0;  // mean over items of per-item mean node cross-entropy
  double edge_loss = 0.0;  // same over ordered off-diagonal pairs, averaged over
                           // items with at least two atoms; 0 when none have any
};

// One optimizer step: per item draws t uniform in [1, sched.steps], corrupts
// the clean state to step t, passes z through condition dropout on the tape
// (so the embedder and drop vector train too), and scores cross-entropy of
// predicting the clean categories. Deterministic for a fixed seed and store.
// Throws a numerical error when the loss or any gradient is non-finite.
TrainStepResult train_step(std::span<const TrainItem> batch, ParamStore& store,
                           const DenoiserConfig& cfg, const NoiseSchedule& sched, Adam& opt,
                           uint64_t rng_seed, const TrainConfig& tcfg = {},
                           const std::string& prefix = "dn",
                           const std::string& cond_prefix = "cond");

}  // namespace moldiff

#endif  // MOLDIFF_DENOISER_HPP_
