//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_CHEM_HPP_
#define MOLDIFF_CHEM_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "moldiff/errors.hpp"
#include "moldiff/molgraph.hpp"

namespace moldiff {

inline constexpr int kFingerprintBits = 2048;
inline constexpr int kDefaultFingerprintRadius = 2;

// Count fingerprint over circular atom environments: every (atom, radius)
// pair from 0 up to `radius` contributes one count to a hashed bucket.
// Environment ids are order-independent (neighbor lists are sorted before
// hashing), so the result is invariant under atom relabeling.
std::vector<uint32_t> morgan_fingerprint(const MolecularGraph& g,
                                         int radius = kDefaultFingerprintRadius,
                                         int n_bits = kFingerprintBits);

struct ChemError {
  std::string message;
  Error to_error() const { return numerical_error(message); }
};

// Min-max similarity sum(min)/sum(max) over equal-length non-negative vectors.
Result<double, ChemError> tanimoto(std::span<const double> a, std::span<const double> b);
Result<double, ChemError> tanimoto_counts(std::span<const uint32_t> a, std::span<const uint32_t> b);

std::vector<double> to_double_vector(std::span<const uint32_t> counts);

// Ring-and-linker scaffold: atoms of degree <= 1 are peeled off until a
// fixpoint. Acyclic molecules reduce to the empty scaffold (empty string).
struct ScaffoldResult {
  std::string smiles;  // canonical; "" means the empty scaffold
  int num_atoms = 0;
};
ScaffoldResult bemis_murcko_scaffold(const MolecularGraph& g);

struct MetricReport {
  double validity = 0.0;
  double uniqueness = 0.0;
  double coverage = 0.0;
  double morgan_sim = 0.0;
  double scaffold_unique = 0.0;
  double scaffold_novelty = 0.0;
  double internal_diversity = 0.0;

  // Stable "key<TAB>value" lines, one metric per line.
  std::string to_text() const;
};

// Evaluates a generated set against a reference set. `pairing` optionally maps
// each generated index to its ground-truth reference index (-1 for none);
// without it, similarity is taken against the best reference match. Invalid
// generated graphs count against validity and are excluded from the other
// metrics; valid ones are reduced to their largest component.
MetricReport metric_suite(const std::vector<MolecularGraph>& generated,
                          const std::vector<MolecularGraph>& reference,
                          const std::set<std::string>& training_scaffolds,
                          std::span<const int> pairing = {});

}  // namespace moldiff

#endif  // MOLDIFF_CHEM_HPP_
