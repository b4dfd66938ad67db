//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/chem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace moldiff {

namespace {

uint64_t mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  return h;
}

uint64_t initial_invariant(const MolecularGraph& g, int i) {
  const Atom& a = g.atom(i);
  uint64_t h = 0x6d6f6c6469666621ULL;
  h = mix(h, static_cast<uint64_t>(a.element));
  h = mix(h, static_cast<uint64_t>(g.neighbors(i).size()));
  h = mix(h, static_cast<uint64_t>(static_cast<int>(a.charge) + 16));
  h = mix(h, static_cast<uint64_t>(a.explicit_h));
  h = mix(h, a.aromatic ? 1u : 0u);
  return h;
}

}  // namespace

std::vector<uint32_t> morgan_fingerprint(const MolecularGraph& g, int radius, int n_bits) {
  if (radius < 0 || n_bits <= 0) throw numerical_error("bad fingerprint parameters");
  const int n = g.num_atoms();
  std::vector<uint32_t> fp(static_cast<size_t>(n_bits), 0);
  std::vector<uint64_t> ids(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = initial_invariant(g, i);
  for (int r = 0; r <= radius; ++r) {
    if (r > 0) {
      std::vector<uint64_t> next(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        std::vector<std::pair<uint64_t, uint64_t>> nbr;
        for (const auto& [j, bi] : g.neighbors(i))
          nbr.emplace_back(static_cast<uint64_t>(g.bonds()[static_cast<size_t>(bi)].order),
                           ids[static_cast<size_t>(j)]);
        std::sort(nbr.begin(), nbr.end());
        uint64_t h = mix(0x52add1a5ULL, static_cast<uint64_t>(r));
        h = mix(h, ids[static_cast<size_t>(i)]);
        for (const auto& [o, v] : nbr) {
          h = mix(h, o);
          h = mix(h, v);
        }
        next[static_cast<size_t>(i)] = h;
      }
      ids = std::move(next);
    }
    for (int i = 0; i < n; ++i)
      ++fp[static_cast<size_t>(ids[static_cast<size_t>(i)] % static_cast<uint64_t>(n_bits))];
  }
  return fp;
}

Result<double, ChemError> tanimoto(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw numerical_error("tanimoto: length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw numerical_error("tanimoto: negative entry");
    num += std::min(a[i], b[i]);
    den += std::max(a[i], b[i]);
  }
  if (den == 0.0) return ChemError{"tanimoto of two all-zero vectors"};
  return num / den;
}

Result<double, ChemError> tanimoto_counts(std::span<const uint32_t> a, std::span<const uint32_t> b) {
  if (a.size() != b.size()) throw numerical_error("tanimoto: length mismatch");
  uint64_t num = 0, den = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += std::min(a[i], b[i]);
    den += std::max(a[i], b[i]);
  }
  if (den == 0) return ChemError{"tanimoto of two all-zero vectors"};
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<double> to_double_vector(std::span<const uint32_t> counts) {
  return std::vector<double>(counts.begin(), counts.end());
}

ScaffoldResult bemis_murcko_scaffold(const MolecularGraph& g) {
  std::vector<bool> alive(static_cast<size_t>(g.num_atoms()), true);
  std::vector<int> degree(static_cast<size_t>(g.num_atoms()), 0);
  for (int i = 0; i < g.num_atoms(); ++i)
    degree[static_cast<size_t>(i)] = static_cast<int>(g.neighbors(i).size());
  for (;;) {
    std::vector<int> peel;
    for (int i = 0; i < g.num_atoms(); ++i)
      if (alive[static_cast<size_t>(i)] && degree[static_cast<size_t>(i)] <= 1) peel.push_back(i);
    if (peel.empty()) break;
    for (int i : peel) {
      alive[static_cast<size_t>(i)] = false;
      for (const auto& [j, bi] : g.neighbors(i))
        if (alive[static_cast<size_t>(j)]) --degree[static_cast<size_t>(j)];
    }
  }
  std::vector<int> keep;
  for (int i = 0; i < g.num_atoms(); ++i)
    if (alive[static_cast<size_t>(i)]) keep.push_back(i);
  ScaffoldResult result;
  result.num_atoms = static_cast<int>(keep.size());
  if (keep.empty()) return result;
  result.smiles = write_smiles(induced_subgraph(g, keep));
  return result;
}

std::string MetricReport::to_text() const {
  const std::pair<const char*, double> rows[] = {
      {"validity", validity},
      {"uniqueness", uniqueness},
      {"coverage", coverage},
      {"morgan_sim", morgan_sim},
      {"scaffold_unique", scaffold_unique},
      {"scaffold_novelty", scaffold_novelty},
      {"internal_diversity", internal_diversity},
  };
  std::string out;
  char buf[64];
  for (const auto& [key, value] : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%.6f\n", key, value);
    out += buf;
  }
  return out;
}

MetricReport metric_suite(const std::vector<MolecularGraph>& generated,
                          const std::vector<MolecularGraph>& reference,
                          const std::set<std::string>& training_scaffolds,
                          std::span<const int> pairing) {
  if (generated.empty()) throw data_error("metric_suite: empty generated set");
  if (!pairing.empty() && pairing.size() != generated.size())
    throw data_error("metric_suite: pairing size mismatch");

  struct ValidEntry {
    std::string smiles;
    MolecularGraph mol;
    std::vector<uint32_t> fp;
    int source_index;
  };
  std::vector<ValidEntry> valid;
  for (size_t i = 0; i < generated.size(); ++i) {
    const std::string smiles = canonical_smiles_of_valid(generated[i]);
    if (smiles.empty()) continue;
    ValidEntry e;
    e.smiles = smiles;
    e.mol = induced_subgraph(generated[i], largest_component(generated[i]));
    e.fp = morgan_fingerprint(e.mol);
    e.source_index = static_cast<int>(i);
    valid.push_back(std::move(e));
  }

  MetricReport report;
  report.validity = static_cast<double>(valid.size()) / static_cast<double>(generated.size());
  if (valid.empty()) return report;

  std::set<std::string> distinct;
  std::set<Element> elements;
  std::set<std::string> scaffolds;
  for (const auto& e : valid) {
    distinct.insert(e.smiles);
    for (int i = 0; i < e.mol.num_atoms(); ++i) elements.insert(e.mol.atom(i).element);
    scaffolds.insert(bemis_murcko_scaffold(e.mol).smiles);
  }
  report.uniqueness = static_cast<double>(distinct.size()) / static_cast<double>(valid.size());
  report.coverage = static_cast<double>(elements.size()) / static_cast<double>(kNumElements);
  report.scaffold_unique = static_cast<double>(scaffolds.size()) / static_cast<double>(valid.size());
  int novel = 0;
  for (const auto& s : scaffolds)
    if (!training_scaffolds.count(s)) ++novel;
  report.scaffold_novelty =
      scaffolds.empty() ? 0.0 : static_cast<double>(novel) / static_cast<double>(scaffolds.size());

  if (!reference.empty()) {
    std::vector<std::vector<uint32_t>> ref_fps;
    ref_fps.reserve(reference.size());
    for (const auto& r : reference) ref_fps.push_back(morgan_fingerprint(r));
    double total = 0.0;
    for (const auto& e : valid) {
      double sim = 0.0;
      const int pair_idx = pairing.empty() ? -1 : pairing[static_cast<size_t>(e.source_index)];
      if (pair_idx >= 0) {
        if (pair_idx >= static_cast<int>(reference.size()))
          throw data_error("metric_suite: pairing index out of range");
        auto r = tanimoto_counts(e.fp, ref_fps[static_cast<size_t>(pair_idx)]);
        sim = r.ok() ? r.value() : 0.0;
      } else {
        for (const auto& rf : ref_fps) {
          auto r = tanimoto_counts(e.fp, rf);
          if (r.ok()) sim = std::max(sim, r.value());
        }
      }
      total += sim;
    }
    report.morgan_sim = total / static_cast<double>(valid.size());
  }

  if (valid.size() >= 2) {
    double total = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < valid.size(); ++i)
      for (size_t j = i + 1; j < valid.size(); ++j) {
        auto r = tanimoto_counts(valid[i].fp, valid[j].fp);
        total += 1.0 - (r.ok() ? r.value() : 0.0);
        ++pairs;
      }
    report.internal_diversity = total / static_cast<double>(pairs);
  }
  return report;
}

}  // namespace moldiff
