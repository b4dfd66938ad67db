//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_MOLGRAPH_HPP_
#define MOLDIFF_MOLGRAPH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "moldiff/errors.hpp"

namespace moldiff {

// Heavy-atom vocabulary, in the fixed order used for categorical encodings.
enum class Element : uint8_t { B, C, N, O, F, Si, P, S, Cl, Br, I };
inline constexpr int kNumElements = 11;

const char* element_symbol(Element e);
std::optional<Element> element_from_symbol(const std::string& symbol);
// Highest allowed valence (S and P take their hypervalent maxima: 6 and 5).
int max_valence(Element e);
// Elements that may carry the aromatic flag.
bool aromatic_capable(Element e);
// True for symbols writable without brackets when uncharged (all but Si).
bool organic_subset(Element e);

enum class BondOrder : uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };
// Contribution of a bond toward the valence total; aromatic counts 1.5.
double bond_order_value(BondOrder o);

struct Atom {
  Element element = Element::C;
  int8_t charge = 0;
  uint8_t explicit_h = 0;
  bool aromatic = false;
};

struct Bond {
  int a = 0;  // always a < b
  int b = 0;
  BondOrder order = BondOrder::Single;
};

class MolecularGraph {
 public:
  int add_atom(const Atom& atom);
  // Endpoints must be distinct existing atoms; duplicate bonds are rejected.
  void add_bond(int a, int b, BondOrder order);

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  const Atom& atom(int i) const { return atoms_[static_cast<size_t>(i)]; }
  Atom& atom(int i) { return atoms_[static_cast<size_t>(i)]; }
  const std::vector<Bond>& bonds() const { return bonds_; }

  // (neighbor atom, bond index) pairs.
  const std::vector<std::pair<int, int>>& neighbors(int i) const {
    return adjacency_[static_cast<size_t>(i)];
  }
  const Bond* find_bond(int a, int b) const;

  double valence_total(int i) const;  // bond orders + explicit hydrogens

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<std::pair<int, int>>> adjacency_;
};

// --- parsing -----------------------------------------------------------------

enum class ParseErrorKind {
  kUnbalancedParenthesis,
  kUnknownElement,
  kUnclosedRing,
  kValenceViolation,
  kAromaticityViolation,
  kSyntax,
};

const char* parse_error_kind_name(ParseErrorKind k);

struct ParseError {
  ParseErrorKind kind = ParseErrorKind::kSyntax;
  // 0-based byte offset; failures discovered at end of input report the
  // input length.
  size_t offset = 0;
  std::string message;

  Error to_error() const {
    return data_error(std::string(parse_error_kind_name(kind)) + " at offset " +
                      std::to_string(offset) + ": " + message);
  }
};

// Total over arbitrary byte strings: never aborts, every failure is typed.
Result<MolecularGraph, ParseError> parse_smiles(const std::string& text);

// --- structural checks and canonical form ------------------------------------

// First invariant violation of a graph, if any: valence limits and the
// ring-membership rules for aromatic flags.
std::optional<ParseError> check_graph(const MolecularGraph& g);

// Canonical atom ranks via iterative neighborhood refinement; ties broken on
// the lowest-index atom of the smallest refinement class, then re-refined.
// Output is a permutation of 0..n-1, stable under input relabeling for graphs
// whose residual ties are symmetry orbits.
std::vector<int> canonical_ranks(const MolecularGraph& g);

// Canonical SMILES. Requires a graph that passes check_graph; components are
// emitted dot-separated in sorted order.
std::string write_smiles(const MolecularGraph& g);

// Indices of the largest connected component (ties: the one containing the
// lowest atom index).
std::vector<int> largest_component(const MolecularGraph& g);
MolecularGraph induced_subgraph(const MolecularGraph& g, const std::vector<int>& atoms);

// True iff the largest connected component passes all structural checks and
// survives a write/parse round trip. Never throws.
bool is_valid(const MolecularGraph& g);

// Canonical SMILES of the largest valid component. Empty if is_valid is false.
std::string canonical_smiles_of_valid(const MolecularGraph& g);

}  // namespace moldiff

#endif  // MOLDIFF_MOLGRAPH_HPP_
