//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "moldiff/diffusion.hpp"
#include "moldiff/molgraph.hpp"
#include "moldiff/rng.hpp"

using namespace moldiff;

namespace {

MolecularGraph mol(const std::string& s) {
  auto r = parse_smiles(s);
  REQUIRE(r.ok());
  return r.value();
}

// Plain-loop matrix product, independent of TransitionMatrix::multiplied_by.
std::vector<double> naive_product(const std::vector<double>& a, const std::vector<double>& b, int k) {
  std::vector<double> out(static_cast<size_t>(k * k), 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double v = 0.0;
      for (int l = 0; l < k; ++l)
        v += a[static_cast<size_t>(i * k + l)] * b[static_cast<size_t>(l * k + j)];
      out[static_cast<size_t>(i * k + j)] = v;
    }
  return out;
}

std::vector<double> naive_softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

// Empirical frequencies vs exact law, four binomial sigmas per category.
void check_frequencies(const std::vector<long>& counts, const std::vector<double>& probs, long n) {
  REQUIRE(counts.size() == probs.size());
  for (size_t c = 0; c < counts.size(); ++c) {
    const double p = probs[c];
    const double freq = static_cast<double>(counts[c]) / static_cast<double>(n);
    const double sigma = std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n));
    CHECK_MESSAGE(std::abs(freq - p) < 4.0 * sigma + 1e-9,
                  "category " << c << ": freq " << freq << " vs p " << p);
  }
}

NoiseSchedule identity_schedule(int steps) {
  NoiseSchedule s;
  s.steps = steps;
  s.alpha.assign(static_cast<size_t>(steps + 1), 1.0);
  s.alpha_bar.assign(static_cast<size_t>(steps + 1), 1.0);
  s.q_node.assign(static_cast<size_t>(steps + 1), TransitionMatrix::identity(kNodeCategories));
  s.qbar_node = s.q_node;
  s.q_edge.assign(static_cast<size_t>(steps + 1), TransitionMatrix::identity(kEdgeCategories));
  s.qbar_edge = s.q_edge;
  s.node_marginal.assign(kNodeCategories, 1.0 / kNodeCategories);
  s.edge_marginal.assign(kEdgeCategories, 1.0 / kEdgeCategories);
  return s;
}

// Logits that underflow to an exact one-hot after softmax.
DenoiseLogits certainty_logits(const CategoricalGraphState& target) {
  DenoiseLogits l;
  l.node.assign(target.node.size(), 0.0);
  l.edge.assign(target.edge.size(), 0.0);
  for (int i = 0; i < target.n; ++i)
    l.node[static_cast<size_t>(i * kNodeCategories + target.node_argmax(i))] = 800.0;
  for (int i = 0; i < target.n; ++i)
    for (int j = 0; j < target.n; ++j)
      l.edge[static_cast<size_t>((i * target.n + j) * kEdgeCategories + target.edge_argmax(i, j))] =
          800.0;
  return l;
}

}  // namespace

TEST_CASE("schedule matrices are row-stochastic with fading retention") {
  for (int steps : {1, 7, 500}) {
    NoiseSchedule s = build_schedule(steps);
    REQUIRE(s.steps == steps);
    for (int t = 1; t <= steps; ++t) {
      CHECK(s.alpha_bar[static_cast<size_t>(t)] <= s.alpha_bar[static_cast<size_t>(t - 1)] + 1e-15);
      for (const auto* q : {&s.q_node[static_cast<size_t>(t)], &s.qbar_node[static_cast<size_t>(t)]}) {
        for (int i = 0; i < q->k; ++i) {
          double row = 0.0;
          for (int j = 0; j < q->k; ++j) {
            CHECK(q->at(i, j) >= 0.0);
            row += q->at(i, j);
          }
          CHECK(std::abs(row - 1.0) < 1e-12);
        }
      }
    }
    // Terminal cumulative kernel is uniform to within 1e-3 total variation.
    const TransitionMatrix& last = s.qbar_node[static_cast<size_t>(steps)];
    for (int i = 0; i < last.k; ++i) {
      double tv = 0.0;
      for (int j = 0; j < last.k; ++j) tv += std::abs(last.at(i, j) - 1.0 / last.k);
      CHECK(tv / 2.0 < 1e-3);
    }
  }
  CHECK_THROWS_AS((void)build_schedule(0), Error);
}

TEST_CASE("cumulative kernels equal the literal per-step product") {
  NoiseSchedule s = build_schedule(16);
  std::vector<double> acc = TransitionMatrix::identity(kNodeCategories).m;
  for (int t = 1; t <= 16; ++t) {
    acc = naive_product(acc, s.q_node[static_cast<size_t>(t)].m, kNodeCategories);
    const auto& qb = s.qbar_node[static_cast<size_t>(t)].m;
    for (size_t i = 0; i < acc.size(); ++i) CHECK(std::abs(acc[i] - qb[i]) < 1e-13);
  }
  std::vector<double> acc_e = TransitionMatrix::identity(kEdgeCategories).m;
  for (int t = 1; t <= 16; ++t) {
    acc_e = naive_product(acc_e, s.q_edge[static_cast<size_t>(t)].m, kEdgeCategories);
    const auto& qb = s.qbar_edge[static_cast<size_t>(t)].m;
    for (size_t i = 0; i < acc_e.size(); ++i) CHECK(std::abs(acc_e[i] - qb[i]) < 1e-13);
  }
}

TEST_CASE("single-step schedule lands on the mixing marginal immediately") {
  NoiseSchedule s = build_schedule(1);
  for (int i = 0; i < kNodeCategories; ++i)
    for (int j = 0; j < kNodeCategories; ++j)
      CHECK(s.qbar_node[1].at(i, j) == doctest::Approx(1.0 / kNodeCategories).epsilon(1e-6));
}

TEST_CASE("custom mixing marginals are honored and validated") {
  std::vector<double> nm(kNodeCategories, 0.0);
  nm[1] = 0.7;
  nm[3] = 0.3;
  std::vector<double> em = {0.6, 0.1, 0.1, 0.1, 0.1};
  NoiseSchedule s = build_schedule(64, ScheduleKind::kMarginal, nm, em);
  for (int i = 0; i < kNodeCategories; ++i)
    for (int j = 0; j < kNodeCategories; ++j)
      CHECK(s.qbar_node[64].at(i, j) == doctest::Approx(nm[static_cast<size_t>(j)]).epsilon(1e-3));
  std::vector<double> bad(kNodeCategories, 0.5);
  CHECK_THROWS_AS((void)build_schedule(4, ScheduleKind::kMarginal, bad, em), Error);
}

TEST_CASE("forward sampling through an identity kernel returns the input") {
  NoiseSchedule s = identity_schedule(1);
  CategoricalGraphState x0 = state_from_graph(mol("CCO"));
  CategoricalGraphState out = forward_sample(x0, 1, s, 7);
  CHECK(out.node == x0.node);
  CHECK(out.edge == x0.edge);
}

TEST_CASE("forward sampling matches the exact marginal law") {
  NoiseSchedule s = build_schedule(10);
  CategoricalGraphState x0 = state_from_graph(mol("CCO"));
  const int t = 5;
  // Exact law for node 0 (carbon): row of the cumulative kernel.
  std::vector<double> law(kNodeCategories);
  for (int j = 0; j < kNodeCategories; ++j)
    law[static_cast<size_t>(j)] = s.qbar_node[t].at(static_cast<int>(Element::C), j);

  const long n = 40000;
  std::vector<long> counts(kNodeCategories, 0);
  std::vector<long> edge_counts(kEdgeCategories, 0);
  for (long rep = 0; rep < n; ++rep) {
    CategoricalGraphState xt = forward_sample(x0, t, s, 1000 + static_cast<uint64_t>(rep));
    ++counts[static_cast<size_t>(xt.node_argmax(0))];
    ++edge_counts[static_cast<size_t>(xt.edge_argmax(0, 1))];
    if (rep < 50) {
      // Mirrored edges and untouched diagonal.
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(xt.edge_argmax(i, j) == xt.edge_argmax(j, i));
      CHECK(xt.edge_argmax(1, 1) == kEdgeNone);
    }
  }
  check_frequencies(counts, law, n);
  std::vector<double> edge_law(kEdgeCategories);
  for (int j = 0; j < kEdgeCategories; ++j)
    edge_law[static_cast<size_t>(j)] = s.qbar_edge[t].at(1, j);  // bond 0-1 is single
  check_frequencies(edge_counts, edge_law, n);
}

TEST_CASE("terminal forward samples are uniform") {
  NoiseSchedule s = build_schedule(50);
  CategoricalGraphState x0 = state_from_graph(mol("C"));
  const long n = 40000;
  std::vector<long> counts(kNodeCategories, 0);
  for (long rep = 0; rep < n; ++rep) {
    CategoricalGraphState xt = forward_sample(x0, 50, s, static_cast<uint64_t>(rep));
    ++counts[static_cast<size_t>(xt.node_argmax(0))];
  }
  check_frequencies(counts, std::vector<double>(kNodeCategories, 1.0 / kNodeCategories), n);
}

TEST_CASE("masked positions pass through forward sampling untouched") {
  NoiseSchedule s = build_schedule(8);
  CategoricalGraphState x0 = state_from_graph(mol("CCO"));
  x0.mask[1] = 0;
  CategoricalGraphState xt = forward_sample(x0, 8, s, 5);
  for (int c = 0; c < kNodeCategories; ++c)
    CHECK(xt.node_row(1)[static_cast<size_t>(c)] == x0.node_row(1)[static_cast<size_t>(c)]);
  for (int c = 0; c < kEdgeCategories; ++c) {
    CHECK(xt.edge_row(0, 1)[static_cast<size_t>(c)] == x0.edge_row(0, 1)[static_cast<size_t>(c)]);
    CHECK(xt.edge_row(1, 2)[static_cast<size_t>(c)] == x0.edge_row(1, 2)[static_cast<size_t>(c)]);
  }
  CHECK_THROWS_AS((void)forward_sample(x0, 0, s, 1), Error);
  CHECK_THROWS_AS((void)forward_sample(x0, 9, s, 1), Error);
  // Same seed, same draw.
  CategoricalGraphState a = forward_sample(x0, 4, s, 123);
  CategoricalGraphState b = forward_sample(x0, 4, s, 123);
  CHECK(a.node == b.node);
  CHECK(a.edge == b.edge);
}

TEST_CASE("posterior under an identity kernel is degenerate") {
  TransitionMatrix id = TransitionMatrix::identity(4);
  std::vector<double> x0 = {0.0, 1.0, 0.0, 0.0};
  auto same = posterior_row(1, x0, id, id);
  REQUIRE(same.ok());
  CHECK(same.value()[1] == 1.0);
  // An identity chain cannot move category 1 to category 2.
  CHECK(!posterior_row(2, x0, id, id).ok());
}

TEST_CASE("uniform history with identity step pins the posterior to x_t") {
  TransitionMatrix id = TransitionMatrix::identity(5);
  TransitionMatrix uniform;
  uniform.k = 5;
  uniform.m.assign(25, 0.2);
  std::vector<double> x0 = {0.2, 0.2, 0.2, 0.2, 0.2};
  auto r = posterior_row(3, x0, id, uniform);
  REQUIRE(r.ok());
  for (int j = 0; j < 5; ++j) CHECK(r.value()[static_cast<size_t>(j)] == (j == 3 ? 1.0 : 0.0));
}

TEST_CASE("posterior equals brute-force Bayes enumeration") {
  Rng rng(77);
  for (int k : {2, 3, 5}) {
    for (int trial = 0; trial < 40; ++trial) {
      auto random_stochastic = [&]() {
        TransitionMatrix q;
        q.k = k;
        q.m.resize(static_cast<size_t>(k * k));
        for (int i = 0; i < k; ++i) {
          double row = 0.0;
          for (int j = 0; j < k; ++j) {
            double v = rng.uniform() + 0.05;
            q.at(i, j) = v;
            row += v;
          }
          for (int j = 0; j < k; ++j) q.at(i, j) /= row;
        }
        return q;
      };
      TransitionMatrix q_t = random_stochastic();
      TransitionMatrix qbar_prev = random_stochastic();
      std::vector<double> x0(static_cast<size_t>(k), 0.0);
      if (trial % 2 == 0) {
        x0[rng.uniform_int(static_cast<uint64_t>(k))] = 1.0;
      } else {
        double total = 0.0;
        for (double& v : x0) {
          v = rng.uniform();
          total += v;
        }
        for (double& v : x0) v /= total;
      }
      const int xt = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k)));
      auto r = posterior_row(xt, x0, q_t, qbar_prev);
      REQUIRE(r.ok());
      // Enumerate P(x_{t-1} = j, x_t = xt | x0) and normalize.
      std::vector<double> joint(static_cast<size_t>(k), 0.0);
      double total = 0.0;
      for (int j = 0; j < k; ++j) {
        double prior = 0.0;
        for (int a = 0; a < k; ++a) prior += x0[static_cast<size_t>(a)] * qbar_prev.at(a, j);
        joint[static_cast<size_t>(j)] = prior * q_t.at(j, xt);
        total += joint[static_cast<size_t>(j)];
      }
      REQUIRE(total > 0.0);
      double sum = 0.0;
      for (int j = 0; j < k; ++j) {
        CHECK(std::abs(r.value()[static_cast<size_t>(j)] - joint[static_cast<size_t>(j)] / total) <
              1e-10);
        sum += r.value()[static_cast<size_t>(j)];
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("posterior matches conditional frequencies of simulated chains") {
  NoiseSchedule s = build_schedule(3);
  const int start = 1;  // edge category "single"
  Rng rng(314);
  std::map<int, std::vector<long>> counts;  // x3 -> histogram of x2
  std::map<int, long> totals;
  const long chains = 60000;
  for (long rep = 0; rep < chains; ++rep) {
    int x = start;
    int x2 = -1;
    for (int t = 1; t <= 3; ++t) {
      const TransitionMatrix& q = s.q_edge[static_cast<size_t>(t)];
      std::vector<double> row(kEdgeCategories);
      for (int j = 0; j < kEdgeCategories; ++j) row[static_cast<size_t>(j)] = q.at(x, j);
      x = rng.categorical(row);
      if (t == 2) x2 = x;
    }
    auto& h = counts[x];
    if (h.empty()) h.assign(kEdgeCategories, 0);
    ++h[static_cast<size_t>(x2)];
    ++totals[x];
  }
  std::vector<double> x0(kEdgeCategories, 0.0);
  x0[start] = 1.0;
  for (const auto& [x3, hist] : counts) {
    auto post = posterior_row(x3, x0, s.q_edge[3], s.qbar_edge[2]);
    REQUIRE(post.ok());
    check_frequencies(hist, post.value(), totals[x3]);
  }
}

TEST_CASE("guidance combination obeys its closed form") {
  std::vector<double> c = {0.0, 1.0};
  std::vector<double> u = {1.0, 0.0};

  auto s1 = cfg_combine(c, u, 1.0);
  REQUIRE(s1.ok());
  auto sc = naive_softmax(c);
  CHECK(s1.value()[0] == doctest::Approx(sc[0]).epsilon(1e-12));

  auto s0 = cfg_combine(c, u, 0.0);
  REQUIRE(s0.ok());
  auto su = naive_softmax(u);
  CHECK(s0.value()[1] == doctest::Approx(su[1]).epsilon(1e-12));

  auto s3 = cfg_combine(c, u, 3.0);
  REQUIRE(s3.ok());
  std::vector<double> guided = {1.0 + 3.0 * (0.0 - 1.0), 0.0 + 3.0 * (1.0 - 0.0)};
  auto expected = naive_softmax(guided);
  CHECK(s3.value()[0] == doctest::Approx(expected[0]).epsilon(1e-12));
  CHECK(s3.value()[1] == doctest::Approx(expected[1]).epsilon(1e-12));
  double total = s3.value()[0] + s3.value()[1];
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("guidance is invariant to constant logit shifts") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> c(6), u(6);
    for (double& v : c) v = rng.normal() * 2.0;
    for (double& v : u) v = rng.normal() * 2.0;
    const double s = rng.uniform() * 6.0;
    auto base = cfg_combine(c, u, s);
    std::vector<double> c2 = c, u2 = u;
    const double shift = rng.normal() * 10.0;
    for (double& v : c2) v += shift;
    for (double& v : u2) v += shift;
    auto shifted = cfg_combine(c2, u2, s);
    REQUIRE(base.ok());
    REQUIRE(shifted.ok());
    for (size_t i = 0; i < 6; ++i)
      CHECK(base.value()[i] == doctest::Approx(shifted.value()[i]).epsilon(1e-9));
  }
}

TEST_CASE("guidance rejects non-finite logits") {
  std::vector<double> ok = {0.0, 1.0};
  std::vector<double> bad = {std::numeric_limits<double>::infinity(), 0.0};
  CHECK(!cfg_combine(bad, ok, 1.0).ok());
  CHECK(!cfg_combine(ok, bad, 2.0).ok());
  std::vector<double> shorter = {0.0};
  CHECK_THROWS_AS((void)cfg_combine(ok, shorter, 1.0), Error);
}

TEST_CASE("a certain denoiser under an identity kernel reproduces the input") {
  NoiseSchedule s = identity_schedule(3);
  CategoricalGraphState x0 = state_from_graph(mol("CCO"));
  DenoiseLogits cond = certainty_logits(x0);
  Rng rng(9);
  CategoricalGraphState prev = reverse_step(x0, cond, cond, 2, 1.0, s, rng);
  CHECK(prev.node == x0.node);
  CHECK(prev.edge == x0.edge);
}

TEST_CASE("reverse step samples the enumerated mixture law") {
  NoiseSchedule s = build_schedule(4);
  const int t = 3, xt_cat = 7;
  CategoricalGraphState xt = CategoricalGraphState::zeros(1);
  xt.node_row(0)[xt_cat] = 1.0;
  xt.edge_row(0, 0)[kEdgeNone] = 1.0;

  Rng logit_rng(55);
  DenoiseLogits cond, uncond;
  cond.node.resize(kNodeCategories);
  uncond.node.resize(kNodeCategories);
  for (double& v : cond.node) v = logit_rng.normal();
  for (double& v : uncond.node) v = logit_rng.normal();
  cond.edge.assign(kEdgeCategories, 0.0);
  uncond.edge.assign(kEdgeCategories, 0.0);
  const double scale = 2.5;

  // Independent enumeration of the mixture over clean-state hypotheses.
  std::vector<double> guided(kNodeCategories);
  for (int i = 0; i < kNodeCategories; ++i)
    guided[static_cast<size_t>(i)] =
        uncond.node[static_cast<size_t>(i)] +
        scale * (cond.node[static_cast<size_t>(i)] - uncond.node[static_cast<size_t>(i)]);
  guided = naive_softmax(guided);
  const TransitionMatrix& q = s.q_node[t];
  const TransitionMatrix& qb = s.qbar_node[t - 1];
  std::vector<double> law(kNodeCategories, 0.0);
  for (int tilde = 0; tilde < kNodeCategories; ++tilde) {
    std::vector<double> post(kNodeCategories);
    double z = 0.0;
    for (int j = 0; j < kNodeCategories; ++j) {
      post[static_cast<size_t>(j)] = q.at(j, xt_cat) * qb.at(tilde, j);
      z += post[static_cast<size_t>(j)];
    }
    for (int j = 0; j < kNodeCategories; ++j)
      law[static_cast<size_t>(j)] += guided[static_cast<size_t>(tilde)] * post[static_cast<size_t>(j)] / z;
  }

  Rng rng(321);
  const long n = 30000;
  std::vector<long> counts(kNodeCategories, 0);
  for (long rep = 0; rep < n; ++rep) {
    CategoricalGraphState prev = reverse_step(xt, cond, uncond, t, scale, s, rng);
    ++counts[static_cast<size_t>(prev.node_argmax(0))];
  }
  check_frequencies(counts, law, n);
}

TEST_CASE("at the final step the guided distribution is sampled directly") {
  NoiseSchedule s = build_schedule(4);
  CategoricalGraphState xt = CategoricalGraphState::zeros(1);
  xt.node_row(0)[2] = 1.0;
  xt.edge_row(0, 0)[kEdgeNone] = 1.0;
  DenoiseLogits cond;
  cond.node = {2.0, 0.0, -1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0};
  cond.edge.assign(kEdgeCategories, 0.0);
  auto law = naive_softmax(cond.node);
  Rng rng(17);
  const long n = 30000;
  std::vector<long> counts(kNodeCategories, 0);
  for (long rep = 0; rep < n; ++rep) {
    CategoricalGraphState prev = reverse_step(xt, cond, cond, 1, 1.0, s, rng);
    ++counts[static_cast<size_t>(prev.node_argmax(0))];
  }
  check_frequencies(counts, law, n);
}

TEST_CASE("identical conditional and unconditional logits make s irrelevant") {
  NoiseSchedule s = build_schedule(6);
  CategoricalGraphState xt = state_from_graph(mol("CCO"));
  Rng lr(3);
  DenoiseLogits l;
  l.node.resize(xt.node.size());
  l.edge.assign(xt.edge.size(), 0.0);
  for (double& v : l.node) v = lr.normal();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double v = lr.normal();
      l.edge[static_cast<size_t>((i * 3 + j) * kEdgeCategories + 1)] = v;
      l.edge[static_cast<size_t>((j * 3 + i) * kEdgeCategories + 1)] = v;
    }
  Rng r1(42), r2(42);
  CategoricalGraphState a = reverse_step(xt, l, l, 4, 0.0, s, r1);
  CategoricalGraphState b = reverse_step(xt, l, l, 4, 1.0, s, r2);
  CHECK(a.node == b.node);
  CHECK(a.edge == b.edge);
  // Output stays edge-symmetric with a pinned diagonal.
  for (int i = 0; i < 3; ++i) {
    CHECK(a.edge_argmax(i, i) == kEdgeNone);
    for (int j = 0; j < 3; ++j) CHECK(a.edge_argmax(i, j) == a.edge_argmax(j, i));
  }
}

TEST_CASE("a single-step chain with a certain denoiser emits the exact molecule") {
  NoiseSchedule s = build_schedule(1);
  CategoricalGraphState target = state_from_graph(mol("CCO"));
  DenoiserFn model = [&](const CategoricalGraphState&, int, const std::optional<std::vector<double>>&) {
    return certainty_logits(target);
  };
  SampleResult out = sample(s, model, std::nullopt, 3, 1.0, 99);
  CHECK(out.state.node == target.node);
  CHECK(out.state.edge == target.edge);
  CHECK(write_smiles(out.graph) == "CCO");
}

TEST_CASE("sampling is deterministic in the seed") {
  NoiseSchedule s = build_schedule(6);
  DenoiserFn model = [](const CategoricalGraphState& st, int t, const std::optional<std::vector<double>>&) {
    DenoiseLogits l;
    l.node.assign(st.node.size(), 0.0);
    l.edge.assign(st.edge.size(), 0.0);
    for (int i = 0; i < st.n; ++i)
      l.node[static_cast<size_t>(i * kNodeCategories + st.node_argmax(i))] = 1.0 + 0.1 * t;
    return l;
  };
  SampleResult a = sample(s, model, std::nullopt, 4, 1.0, 2024);
  SampleResult b = sample(s, model, std::nullopt, 4, 1.0, 2024);
  CHECK(a.state.node == b.state.node);
  CHECK(a.state.edge == b.state.edge);
  SampleResult c = sample(s, model, std::nullopt, 4, 1.0, 2025);
  CHECK((a.state.node != c.state.node || a.state.edge != c.state.edge));
}

TEST_CASE("full chain matches the enumerated reverse law") {
  // Single node, three steps, a denoiser that prefers the current category.
  NoiseSchedule s = build_schedule(3);
  const double bonus = 2.0;
  DenoiserFn model = [&](const CategoricalGraphState& st, int, const std::optional<std::vector<double>>&) {
    DenoiseLogits l;
    l.node.assign(st.node.size(), 0.0);
    l.edge.assign(st.edge.size(), 0.0);
    l.node[static_cast<size_t>(st.node_argmax(0))] = bonus;
    return l;
  };

  // Enumerate: p_T uniform, then apply the reverse kernel for t=3,2, then the
  // direct guided draw at t=1.
  const int k = kNodeCategories;
  std::vector<double> dist(static_cast<size_t>(k), 1.0 / k);
  for (int t = 3; t >= 2; --t) {
    const TransitionMatrix& q = s.q_node[static_cast<size_t>(t)];
    const TransitionMatrix& qb = s.qbar_node[static_cast<size_t>(t - 1)];
    std::vector<double> next(static_cast<size_t>(k), 0.0);
    for (int b = 0; b < k; ++b) {
      std::vector<double> logits(static_cast<size_t>(k), 0.0);
      logits[static_cast<size_t>(b)] = bonus;
      auto guided = naive_softmax(logits);
      for (int tilde = 0; tilde < k; ++tilde) {
        std::vector<double> post(static_cast<size_t>(k));
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
          post[static_cast<size_t>(j)] = q.at(j, b) * qb.at(tilde, j);
          z += post[static_cast<size_t>(j)];
        }
        for (int j = 0; j < k; ++j)
          next[static_cast<size_t>(j)] += dist[static_cast<size_t>(b)] *
                                          guided[static_cast<size_t>(tilde)] *
                                          post[static_cast<size_t>(j)] / z;
      }
    }
    dist = std::move(next);
  }
  std::vector<double> final_law(static_cast<size_t>(k), 0.0);
  for (int b = 0; b < k; ++b) {
    std::vector<double> logits(static_cast<size_t>(k), 0.0);
    logits[static_cast<size_t>(b)] = bonus;
    auto guided = naive_softmax(logits);
    for (int j = 0; j < k; ++j)
      final_law[static_cast<size_t>(j)] += dist[static_cast<size_t>(b)] * guided[static_cast<size_t>(j)];
  }

  const long n = 30000;
  std::vector<long> counts(static_cast<size_t>(k), 0);
  for (long rep = 0; rep < n; ++rep) {
    SampleResult out = sample(s, model, std::nullopt, 1, 1.0, 5000 + static_cast<uint64_t>(rep));
    ++counts[static_cast<size_t>(out.state.node_argmax(0))];
  }
  check_frequencies(counts, final_law, n);
}

TEST_CASE("guidance scale controls how often the model is queried") {
  NoiseSchedule s = build_schedule(5);
  int calls = 0;
  DenoiserFn model = [&](const CategoricalGraphState& st, int, const std::optional<std::vector<double>>&) {
    ++calls;
    DenoiseLogits l;
    l.node.assign(st.node.size(), 0.0);
    l.edge.assign(st.edge.size(), 0.0);
    return l;
  };
  std::optional<std::vector<double>> cond = std::vector<double>{1.0, 2.0};

  calls = 0;
  (void)sample(s, model, cond, 2, 1.0, 1);
  CHECK(calls == 5);

  calls = 0;
  (void)sample(s, model, cond, 2, 3.0, 1);
  CHECK(calls == 10);

  calls = 0;
  (void)sample(s, model, std::nullopt, 2, 3.0, 1);
  CHECK(calls == 5);
}

TEST_CASE("graph encoding round trips through categorical states") {
  for (const char* smiles : {"CCO", "c1ccccc1", "C#N", "C.O", "ClCCl"}) {
    MolecularGraph g = mol(smiles);
    CategoricalGraphState st = state_from_graph(g);
    CHECK(st.n == g.num_atoms());
    for (int i = 0; i < st.n; ++i) {
      double row = 0.0;
      for (double v : st.node_row(i)) row += v;
      CHECK(row == 1.0);
      CHECK(st.edge_argmax(i, i) == kEdgeNone);
    }
    MolecularGraph back = graph_from_state(st);
    CHECK(write_smiles(back) == write_smiles(g));
  }
  CHECK_THROWS_AS((void)state_from_graph(MolecularGraph{}), Error);
}

TEST_CASE("masked nodes are dropped when decoding") {
  CategoricalGraphState st = state_from_graph(mol("CCO"));
  st.mask[1] = 0;
  MolecularGraph g = graph_from_state(st);
  CHECK(g.num_atoms() == 2);
  CHECK(g.num_bonds() == 0);
}

TEST_CASE("edge category mapping is a bijection over bond orders") {
  for (BondOrder o : {BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic}) {
    auto back = bond_order_from_category(edge_category(o));
    REQUIRE(back.has_value());
    CHECK(*back == o);
  }
  CHECK(!bond_order_from_category(kEdgeNone).has_value());
  CHECK(!bond_order_from_category(9).has_value());
}
