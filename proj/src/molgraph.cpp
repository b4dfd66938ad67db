//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/molgraph.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <set>

namespace moldiff {

namespace {

struct ElementInfo {
  const char* symbol;
  int max_valence;
  bool aromatic_ok;
  bool organic;
};

// Order must match the Element enum.
constexpr std::array<ElementInfo, kNumElements> kElements = {{
    {"B", 3, true, true},
    {"C", 4, true, true},
    {"N", 3, true, true},
    {"O", 2, true, true},
    {"F", 1, false, true},
    {"Si", 4, false, false},
    {"P", 5, true, true},
    {"S", 6, true, true},
    {"Cl", 1, false, true},
    {"Br", 1, false, true},
    {"I", 1, false, true},
}};

int info_index(Element e) { return static_cast<int>(e); }

}  // namespace

const char* element_symbol(Element e) { return kElements[static_cast<size_t>(info_index(e))].symbol; }

std::optional<Element> element_from_symbol(const std::string& symbol) {
  for (size_t i = 0; i < kElements.size(); ++i)
    if (symbol == kElements[i].symbol) return static_cast<Element>(i);
  return std::nullopt;
}

int max_valence(Element e) { return kElements[static_cast<size_t>(info_index(e))].max_valence; }
bool aromatic_capable(Element e) { return kElements[static_cast<size_t>(info_index(e))].aromatic_ok; }
bool organic_subset(Element e) { return kElements[static_cast<size_t>(info_index(e))].organic; }

double bond_order_value(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return 1.0;
    case BondOrder::Double: return 2.0;
    case BondOrder::Triple: return 3.0;
    case BondOrder::Aromatic: return 1.5;
  }
  return 0.0;
}

int MolecularGraph::add_atom(const Atom& atom) {
  atoms_.push_back(atom);
  adjacency_.emplace_back();
  return static_cast<int>(atoms_.size()) - 1;
}

void MolecularGraph::add_bond(int a, int b, BondOrder order) {
  if (a == b) throw data_error("self bond");
  if (a < 0 || b < 0 || a >= num_atoms() || b >= num_atoms())
    throw data_error("bond endpoint out of range");
  if (find_bond(a, b) != nullptr) throw data_error("duplicate bond");
  Bond bond;
  bond.a = std::min(a, b);
  bond.b = std::max(a, b);
  bond.order = order;
  const int idx = static_cast<int>(bonds_.size());
  bonds_.push_back(bond);
  adjacency_[static_cast<size_t>(a)].emplace_back(b, idx);
  adjacency_[static_cast<size_t>(b)].emplace_back(a, idx);
}

const Bond* MolecularGraph::find_bond(int a, int b) const {
  for (const auto& [nbr, bi] : adjacency_[static_cast<size_t>(a)])
    if (nbr == b) return &bonds_[static_cast<size_t>(bi)];
  return nullptr;
}

double MolecularGraph::valence_total(int i) const {
  double total = atom(i).explicit_h;
  for (const auto& [nbr, bi] : neighbors(i)) total += bond_order_value(bonds_[static_cast<size_t>(bi)].order);
  return total;
}

const char* parse_error_kind_name(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::kUnbalancedParenthesis: return "UnbalancedParenthesis";
    case ParseErrorKind::kUnknownElement: return "UnknownElement";
    case ParseErrorKind::kUnclosedRing: return "UnclosedRing";
    case ParseErrorKind::kValenceViolation: return "ValenceViolation";
    case ParseErrorKind::kAromaticityViolation: return "AromaticityViolation";
    case ParseErrorKind::kSyntax: return "Syntax";
  }
  return "Syntax";
}

// --- structural validation ----------------------------------------------------

namespace {

struct Violation {
  ParseErrorKind kind;
  int atom_index;  // the atom whose source location best explains the failure
  std::string message;
};

// Bridges of the subgraph restricted to aromatic bonds, via low-link DFS.
// An aromatic bond that is a bridge cannot lie on any aromatic cycle.
std::vector<bool> aromatic_bond_is_bridge(const MolecularGraph& g) {
  const int n = g.num_atoms();
  std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(n));
  for (int bi = 0; bi < g.num_bonds(); ++bi) {
    const Bond& b = g.bonds()[static_cast<size_t>(bi)];
    if (b.order != BondOrder::Aromatic) continue;
    adj[static_cast<size_t>(b.a)].emplace_back(b.b, bi);
    adj[static_cast<size_t>(b.b)].emplace_back(b.a, bi);
  }
  std::vector<bool> bridge(static_cast<size_t>(g.num_bonds()), false);
  std::vector<int> disc(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0);
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int u, int parent_edge) {
    disc[static_cast<size_t>(u)] = low[static_cast<size_t>(u)] = timer++;
    for (const auto& [v, bi] : adj[static_cast<size_t>(u)]) {
      if (bi == parent_edge) continue;
      if (disc[static_cast<size_t>(v)] == -1) {
        dfs(v, bi);
        low[static_cast<size_t>(u)] = std::min(low[static_cast<size_t>(u)], low[static_cast<size_t>(v)]);
        if (low[static_cast<size_t>(v)] > disc[static_cast<size_t>(u)]) bridge[static_cast<size_t>(bi)] = true;
      } else {
        low[static_cast<size_t>(u)] = std::min(low[static_cast<size_t>(u)], disc[static_cast<size_t>(v)]);
      }
    }
  };
  for (int i = 0; i < n; ++i)
    if (disc[static_cast<size_t>(i)] == -1 && !adj[static_cast<size_t>(i)].empty()) dfs(i, -1);
  return bridge;
}

std::optional<Violation> find_violation(const MolecularGraph& g) {
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom& a = g.atom(i);
    const double limit = max_valence(a.element) + std::abs(static_cast<int>(a.charge));
    if (g.valence_total(i) > limit + 1e-9) {
      return Violation{ParseErrorKind::kValenceViolation, i,
                       std::string(element_symbol(a.element)) + " exceeds valence " +
                           std::to_string(static_cast<int>(limit))};
    }
    if (a.aromatic && !aromatic_capable(a.element))
      return Violation{ParseErrorKind::kAromaticityViolation, i,
                       std::string(element_symbol(a.element)) + " cannot be aromatic"};
  }
  std::vector<int> aromatic_degree(static_cast<size_t>(g.num_atoms()), 0);
  for (const Bond& b : g.bonds()) {
    if (b.order != BondOrder::Aromatic) continue;
    if (!g.atom(b.a).aromatic || !g.atom(b.b).aromatic)
      return Violation{ParseErrorKind::kAromaticityViolation, b.b,
                       "aromatic bond with non-aromatic endpoint"};
    ++aromatic_degree[static_cast<size_t>(b.a)];
    ++aromatic_degree[static_cast<size_t>(b.b)];
  }
  for (int i = 0; i < g.num_atoms(); ++i) {
    if (g.atom(i).aromatic && aromatic_degree[static_cast<size_t>(i)] < 2)
      return Violation{ParseErrorKind::kAromaticityViolation, i,
                       "aromatic atom outside an aromatic ring"};
  }
  const auto bridges = aromatic_bond_is_bridge(g);
  for (int bi = 0; bi < g.num_bonds(); ++bi) {
    const Bond& b = g.bonds()[static_cast<size_t>(bi)];
    if (b.order == BondOrder::Aromatic && bridges[static_cast<size_t>(bi)])
      return Violation{ParseErrorKind::kAromaticityViolation, b.b,
                       "aromatic bond not in an aromatic ring"};
  }
  return std::nullopt;
}

}  // namespace

std::optional<ParseError> check_graph(const MolecularGraph& g) {
  if (auto v = find_violation(g)) {
    return ParseError{v->kind, 0, v->message + " (atom " + std::to_string(v->atom_index) + ")"};
  }
  return std::nullopt;
}

// --- SMILES parser --------------------------------------------------------------

namespace {

struct Parser {
  const std::string& text;
  size_t p = 0;
  MolecularGraph graph;
  std::vector<size_t> atom_offset;
  int prev_atom = -1;
  std::optional<BondOrder> pending_bond;
  size_t pending_bond_offset = 0;
  std::vector<int> branch_stack;           // saved prev_atom values
  std::vector<size_t> open_paren_offsets;  // for diagnostics
  bool just_opened_branch = false;
  struct RingOpen {
    int atom;
    std::optional<BondOrder> order;
    size_t offset;
  };
  std::map<int, RingOpen> open_rings;

  explicit Parser(const std::string& t) : text(t) {}

  bool done() const { return p >= text.size(); }
  char peek() const { return text[p]; }

  ParseError err(ParseErrorKind kind, size_t offset, std::string msg) {
    return ParseError{kind, offset, std::move(msg)};
  }

  std::optional<ParseError> connect(int atom, size_t offset) {
    if (prev_atom >= 0) {
      BondOrder order = pending_bond.value_or(
          graph.atom(prev_atom).aromatic && graph.atom(atom).aromatic ? BondOrder::Aromatic
                                                                      : BondOrder::Single);
      if (graph.find_bond(prev_atom, atom) != nullptr)
        return err(ParseErrorKind::kSyntax, offset, "duplicate bond");
      graph.add_bond(prev_atom, atom, order);
    } else if (pending_bond) {
      return err(ParseErrorKind::kSyntax, pending_bond_offset, "bond with no preceding atom");
    }
    pending_bond.reset();
    prev_atom = atom;
    return std::nullopt;
  }

  std::optional<ParseError> close_ring(int digit, size_t offset) {
    if (prev_atom < 0) return err(ParseErrorKind::kSyntax, offset, "ring bond before any atom");
    auto it = open_rings.find(digit);
    if (it == open_rings.end()) {
      open_rings[digit] = RingOpen{prev_atom, pending_bond, offset};
      pending_bond.reset();
      return std::nullopt;
    }
    RingOpen open = it->second;
    open_rings.erase(it);
    if (open.atom == prev_atom)
      return err(ParseErrorKind::kSyntax, offset, "ring bond to the same atom");
    std::optional<BondOrder> order = open.order;
    if (pending_bond) {
      if (order && *order != *pending_bond)
        return err(ParseErrorKind::kSyntax, offset, "ring bond order mismatch");
      order = pending_bond;
    }
    BondOrder final_order = order.value_or(
        graph.atom(open.atom).aromatic && graph.atom(prev_atom).aromatic ? BondOrder::Aromatic
                                                                         : BondOrder::Single);
    if (graph.find_bond(open.atom, prev_atom) != nullptr)
      return err(ParseErrorKind::kSyntax, offset, "duplicate ring bond");
    graph.add_bond(open.atom, prev_atom, final_order);
    pending_bond.reset();
    return std::nullopt;
  }

  // Parses one atom token starting at p (no bracket). Returns atom index or error.
  Result<int, ParseError> parse_plain_atom() {
    const size_t off = p;
    const char c = text[p];
    Atom atom;
    if (c == 'C' && p + 1 < text.size() && text[p + 1] == 'l') {
      atom.element = Element::Cl;
      p += 2;
    } else if (c == 'B' && p + 1 < text.size() && text[p + 1] == 'r') {
      atom.element = Element::Br;
      p += 2;
    } else {
      switch (c) {
        case 'B': atom.element = Element::B; break;
        case 'C': atom.element = Element::C; break;
        case 'N': atom.element = Element::N; break;
        case 'O': atom.element = Element::O; break;
        case 'F': atom.element = Element::F; break;
        case 'P': atom.element = Element::P; break;
        case 'S': atom.element = Element::S; break;
        case 'I': atom.element = Element::I; break;
        case 'b': atom.element = Element::B; atom.aromatic = true; break;
        case 'c': atom.element = Element::C; atom.aromatic = true; break;
        case 'n': atom.element = Element::N; atom.aromatic = true; break;
        case 'o': atom.element = Element::O; atom.aromatic = true; break;
        case 'p': atom.element = Element::P; atom.aromatic = true; break;
        case 's': atom.element = Element::S; atom.aromatic = true; break;
        default:
          return err(ParseErrorKind::kUnknownElement, off, std::string("unexpected symbol '") + c + "'");
      }
      ++p;
    }
    const int idx = graph.add_atom(atom);
    atom_offset.push_back(off);
    return idx;
  }

  Result<int, ParseError> parse_bracket_atom() {
    const size_t open_off = p;
    ++p;  // '['
    if (done()) return err(ParseErrorKind::kSyntax, text.size(), "unterminated bracket atom");
    if (std::isdigit(static_cast<unsigned char>(peek())))
      return err(ParseErrorKind::kSyntax, p, "isotopes are not supported");

    Atom atom;
    const size_t elem_off = p;
    char c = peek();
    if (std::isupper(static_cast<unsigned char>(c))) {
      std::string sym(1, c);
      if (p + 1 < text.size() && std::islower(static_cast<unsigned char>(text[p + 1])) &&
          element_from_symbol(sym + text[p + 1])) {
        sym += text[p + 1];
      }
      auto e = element_from_symbol(sym);
      if (!e) {
        // Retry the two-character form purely for the error span decision.
        if (p + 1 < text.size() && std::islower(static_cast<unsigned char>(text[p + 1])))
          return err(ParseErrorKind::kUnknownElement, elem_off,
                     "unknown element '" + sym + std::string(1, text[p + 1]) + "'");
        return err(ParseErrorKind::kUnknownElement, elem_off, "unknown element '" + sym + "'");
      }
      atom.element = *e;
      p += sym.size();
    } else if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's') {
      switch (c) {
        case 'b': atom.element = Element::B; break;
        case 'c': atom.element = Element::C; break;
        case 'n': atom.element = Element::N; break;
        case 'o': atom.element = Element::O; break;
        case 'p': atom.element = Element::P; break;
        case 's': atom.element = Element::S; break;
      }
      atom.aromatic = true;
      ++p;
      if (!done() && std::islower(static_cast<unsigned char>(peek())))
        return err(ParseErrorKind::kUnknownElement, elem_off, "unknown element");
    } else {
      return err(ParseErrorKind::kUnknownElement, elem_off,
                 std::string("unknown element '") + c + "'");
    }

    if (!done() && peek() == '@')
      return err(ParseErrorKind::kSyntax, p, "stereochemistry is not supported");

    if (!done() && peek() == 'H') {
      ++p;
      int h = 1;
      if (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
        h = 0;
        while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
          h = h * 10 + (peek() - '0');
          if (h > 9) return err(ParseErrorKind::kSyntax, p, "hydrogen count too large");
          ++p;
        }
      }
      atom.explicit_h = static_cast<uint8_t>(h);
    }

    if (!done() && (peek() == '+' || peek() == '-')) {
      const char sign_char = peek();
      const int sign = sign_char == '+' ? 1 : -1;
      int magnitude = 1;
      ++p;
      if (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = 0;
        while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
          magnitude = magnitude * 10 + (peek() - '0');
          if (magnitude > 15) return err(ParseErrorKind::kSyntax, p, "charge magnitude too large");
          ++p;
        }
      } else {
        while (!done() && peek() == sign_char) {
          ++magnitude;
          if (magnitude > 15) return err(ParseErrorKind::kSyntax, p, "charge magnitude too large");
          ++p;
        }
      }
      atom.charge = static_cast<int8_t>(sign * magnitude);
    }

    if (done()) return err(ParseErrorKind::kSyntax, text.size(), "unterminated bracket atom");
    if (peek() != ']')
      return err(ParseErrorKind::kSyntax, p, std::string("unexpected '") + peek() + "' in bracket atom");
    ++p;
    const int idx = graph.add_atom(atom);
    atom_offset.push_back(open_off);
    return idx;
  }

  Result<MolecularGraph, ParseError> run() {
    if (text.empty()) return err(ParseErrorKind::kSyntax, 0, "empty input");
    while (!done()) {
      const char c = peek();
      const size_t off = p;
      if (c == '(') {
        if (prev_atom < 0) return err(ParseErrorKind::kSyntax, off, "branch before any atom");
        if (pending_bond) return err(ParseErrorKind::kSyntax, off, "bond before branch open");
        if (just_opened_branch)
          return err(ParseErrorKind::kSyntax, off, "branch must start with an atom");
        branch_stack.push_back(prev_atom);
        open_paren_offsets.push_back(off);
        just_opened_branch = true;
        ++p;
      } else if (c == ')') {
        if (branch_stack.empty())
          return err(ParseErrorKind::kUnbalancedParenthesis, off, "unmatched ')'");
        if (pending_bond) return err(ParseErrorKind::kSyntax, off, "dangling bond before ')'");
        if (just_opened_branch) return err(ParseErrorKind::kSyntax, off, "empty branch");
        prev_atom = branch_stack.back();
        branch_stack.pop_back();
        open_paren_offsets.pop_back();
        ++p;
      } else if (c == '-' || c == '=' || c == '#' || c == ':') {
        if (pending_bond) return err(ParseErrorKind::kSyntax, off, "doubled bond symbol");
        switch (c) {
          case '-': pending_bond = BondOrder::Single; break;
          case '=': pending_bond = BondOrder::Double; break;
          case '#': pending_bond = BondOrder::Triple; break;
          case ':': pending_bond = BondOrder::Aromatic; break;
        }
        pending_bond_offset = off;
        ++p;
      } else if (c == '/' || c == '\\' || c == '@') {
        return err(ParseErrorKind::kSyntax, off, "stereochemistry is not supported");
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        ++p;
        if (auto e = close_ring(c - '0', off)) return *e;
      } else if (c == '%') {
        if (p + 2 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text[p + 2])))
          return err(ParseErrorKind::kSyntax, off, "'%' needs two digits");
        const int digit = (text[p + 1] - '0') * 10 + (text[p + 2] - '0');
        p += 3;
        if (auto e = close_ring(digit, off)) return *e;
      } else if (c == '.') {
        if (prev_atom < 0) return err(ParseErrorKind::kSyntax, off, "'.' with no preceding atom");
        if (pending_bond) return err(ParseErrorKind::kSyntax, off, "bond across '.'");
        if (!branch_stack.empty()) return err(ParseErrorKind::kSyntax, off, "'.' inside branch");
        prev_atom = -1;
        ++p;
      } else if (c == '[') {
        auto r = parse_bracket_atom();
        if (!r.ok()) return r.error();
        if (auto e = connect(r.value(), off)) return *e;
        just_opened_branch = false;
      } else {
        auto r = parse_plain_atom();
        if (!r.ok()) return r.error();
        if (auto e = connect(r.value(), off)) return *e;
        just_opened_branch = false;
      }
    }
    if (pending_bond) return err(ParseErrorKind::kSyntax, text.size(), "dangling bond at end of input");
    if (!branch_stack.empty())
      return err(ParseErrorKind::kUnbalancedParenthesis, text.size(), "unclosed '('");
    if (!open_rings.empty())
      return err(ParseErrorKind::kUnclosedRing, text.size(),
                 "ring bond " + std::to_string(open_rings.begin()->first) + " never closed");
    if (auto v = find_violation(graph)) {
      const size_t off = v->atom_index < static_cast<int>(atom_offset.size())
                             ? atom_offset[static_cast<size_t>(v->atom_index)]
                             : 0;
      return err(v->kind, off, v->message);
    }
    return std::move(graph);
  }
};

}  // namespace

Result<MolecularGraph, ParseError> parse_smiles(const std::string& text) {
  Parser parser(text);
  return parser.run();
}

// --- canonical ranks ------------------------------------------------------------

namespace {

// Dense re-ranking of arbitrary sortable keys: equal keys share a rank, ranks
// are contiguous from 0 in key order.
template <typename Key>
std::vector<int> dense_ranks(const std::vector<Key>& keys) {
  std::vector<int> order(keys.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return keys[static_cast<size_t>(a)] < keys[static_cast<size_t>(b)];
  });
  std::vector<int> ranks(keys.size(), 0);
  int rank = 0;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && keys[static_cast<size_t>(order[i])] != keys[static_cast<size_t>(order[i - 1])]) ++rank;
    ranks[static_cast<size_t>(order[i])] = rank;
  }
  return ranks;
}

int class_count(const std::vector<int>& ranks) {
  if (ranks.empty()) return 0;
  return *std::max_element(ranks.begin(), ranks.end()) + 1;
}

std::vector<int> refine(const MolecularGraph& g, std::vector<int> ranks) {
  const int n = g.num_atoms();
  for (;;) {
    std::vector<std::vector<int>> keys(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto& k = keys[static_cast<size_t>(i)];
      k.push_back(ranks[static_cast<size_t>(i)]);
      std::vector<std::pair<int, int>> nbr;
      for (const auto& [j, bi] : g.neighbors(i))
        nbr.emplace_back(static_cast<int>(g.bonds()[static_cast<size_t>(bi)].order),
                         ranks[static_cast<size_t>(j)]);
      std::sort(nbr.begin(), nbr.end());
      for (const auto& [o, r] : nbr) {
        k.push_back(o);
        k.push_back(r);
      }
    }
    std::vector<int> next = dense_ranks(keys);
    if (class_count(next) == class_count(ranks)) return next;
    ranks = std::move(next);
  }
}

}  // namespace

std::vector<int> canonical_ranks(const MolecularGraph& g) {
  const int n = g.num_atoms();
  std::vector<std::vector<int>> init(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Atom& a = g.atom(i);
    init[static_cast<size_t>(i)] = {static_cast<int>(a.element),
                                    static_cast<int>(g.neighbors(i).size()),
                                    static_cast<int>(a.charge), static_cast<int>(a.explicit_h),
                                    a.aromatic ? 1 : 0};
  }
  std::vector<int> ranks = refine(g, dense_ranks(init));
  while (class_count(ranks) < n) {
    // Break the smallest tied class (lowest rank on size ties) at its
    // lowest-index member, then re-refine.
    std::vector<int> class_size(static_cast<size_t>(class_count(ranks)), 0);
    for (int r : ranks) ++class_size[static_cast<size_t>(r)];
    int best_class = -1;
    for (size_t c = 0; c < class_size.size(); ++c) {
      if (class_size[c] < 2) continue;
      if (best_class < 0 || class_size[c] < class_size[static_cast<size_t>(best_class)]) best_class = static_cast<int>(c);
    }
    int chosen = -1;
    for (int i = 0; i < n; ++i)
      if (ranks[static_cast<size_t>(i)] == best_class) {
        chosen = i;
        break;
      }
    std::vector<std::vector<int>> keys(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      keys[static_cast<size_t>(i)] = {ranks[static_cast<size_t>(i)], i == chosen ? 0 : 1};
    ranks = refine(g, dense_ranks(keys));
  }
  return ranks;
}

// --- components -----------------------------------------------------------------

std::vector<int> largest_component(const MolecularGraph& g) {
  const int n = g.num_atoms();
  std::vector<int> comp(static_cast<size_t>(n), -1);
  int num_comp = 0;
  for (int i = 0; i < n; ++i) {
    if (comp[static_cast<size_t>(i)] != -1) continue;
    std::vector<int> stack = {i};
    comp[static_cast<size_t>(i)] = num_comp;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& [v, bi] : g.neighbors(u))
        if (comp[static_cast<size_t>(v)] == -1) {
          comp[static_cast<size_t>(v)] = num_comp;
          stack.push_back(v);
        }
    }
    ++num_comp;
  }
  std::vector<int> size(static_cast<size_t>(num_comp), 0);
  for (int c : comp) ++size[static_cast<size_t>(c)];
  // Largest size wins; first component in atom-index order breaks ties, which
  // is the component containing the lowest atom index among the largest.
  int best = 0;
  for (int c = 1; c < num_comp; ++c)
    if (size[static_cast<size_t>(c)] > size[static_cast<size_t>(best)]) best = c;
  std::vector<int> atoms;
  for (int i = 0; i < n; ++i)
    if (comp[static_cast<size_t>(i)] == best) atoms.push_back(i);
  return atoms;
}

MolecularGraph induced_subgraph(const MolecularGraph& g, const std::vector<int>& atoms) {
  MolecularGraph sub;
  std::vector<int> remap(static_cast<size_t>(g.num_atoms()), -1);
  for (int a : atoms) remap[static_cast<size_t>(a)] = sub.add_atom(g.atom(a));
  for (const Bond& b : g.bonds()) {
    const int na = remap[static_cast<size_t>(b.a)];
    const int nb = remap[static_cast<size_t>(b.b)];
    if (na >= 0 && nb >= 0) sub.add_bond(na, nb, b.order);
  }
  return sub;
}

// --- canonical writer -------------------------------------------------------

namespace {

std::string atom_token(const Atom& a) {
  std::string sym = element_symbol(a.element);
  if (a.aromatic)
    for (char& c : sym) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const bool bracket = a.charge != 0 || a.explicit_h > 0 || !organic_subset(a.element);
  if (!bracket) return sym;
  std::string out = "[" + sym;
  if (a.explicit_h > 0) {
    out += 'H';
    if (a.explicit_h > 1) out += std::to_string(static_cast<int>(a.explicit_h));
  }
  if (a.charge != 0) {
    out += a.charge > 0 ? '+' : '-';
    const int mag = std::abs(static_cast<int>(a.charge));
    if (mag > 1) out += std::to_string(mag);
  }
  out += ']';
  return out;
}

std::string bond_token(const MolecularGraph& g, const Bond& b) {
  switch (b.order) {
    case BondOrder::Single:
      // Implicit bonds between aromatic atoms re-parse as aromatic, so a
      // genuine single bond there must be spelled out.
      return g.atom(b.a).aromatic && g.atom(b.b).aromatic ? "-" : "";
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic: return "";
  }
  return "";
}

std::string ring_digit_token(int d) {
  return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
}

struct ComponentWriter {
  const MolecularGraph& g;
  const std::vector<int>& ranks;
  std::vector<bool> visited;
  std::vector<bool> edge_used;
  // Ring closures: bond index -> digit; openings/closings per atom.
  std::vector<std::vector<int>> ring_open_at;   // bond indices opened at atom
  std::vector<std::vector<int>> ring_close_at;  // bond indices closed at atom
  std::vector<int> digit_of_bond;
  std::vector<int> preorder_pos;
  std::vector<std::vector<int>> children;  // tree children in emit order
  std::set<int> free_digits;
  std::string out;

  ComponentWriter(const MolecularGraph& graph, const std::vector<int>& r)
      : g(graph), ranks(r),
        visited(static_cast<size_t>(graph.num_atoms()), false),
        edge_used(static_cast<size_t>(graph.num_bonds()), false),
        ring_open_at(static_cast<size_t>(graph.num_atoms())),
        ring_close_at(static_cast<size_t>(graph.num_atoms())),
        digit_of_bond(static_cast<size_t>(graph.num_bonds()), -1),
        preorder_pos(static_cast<size_t>(graph.num_atoms()), -1),
        children(static_cast<size_t>(graph.num_atoms())) {
    for (int d = 1; d <= 99; ++d) free_digits.insert(d);
  }

  std::vector<std::pair<int, int>> sorted_neighbors(int u) const {
    std::vector<std::pair<int, int>> nbr = g.neighbors(u);
    std::sort(nbr.begin(), nbr.end(), [&](const auto& x, const auto& y) {
      return ranks[static_cast<size_t>(x.first)] < ranks[static_cast<size_t>(y.first)];
    });
    return nbr;
  }

  // Pass 1: preorder DFS in rank order; classifies tree edges vs ring bonds.
  void plan(int root) {
    int counter = 0;
    std::function<void(int)> dfs = [&](int u) {
      visited[static_cast<size_t>(u)] = true;
      preorder_pos[static_cast<size_t>(u)] = counter++;
      for (const auto& [v, bi] : sorted_neighbors(u)) {
        if (edge_used[static_cast<size_t>(bi)]) continue;
        if (visited[static_cast<size_t>(v)]) {
          edge_used[static_cast<size_t>(bi)] = true;
          // v was visited earlier: digit opens at v, closes here at u.
          ring_open_at[static_cast<size_t>(v)].push_back(bi);
          ring_close_at[static_cast<size_t>(u)].push_back(bi);
        } else {
          edge_used[static_cast<size_t>(bi)] = true;
          children[static_cast<size_t>(u)].push_back(v);
          dfs(v);
        }
      }
    };
    dfs(root);
  }

  // Pass 2: emission in the same order, allocating digits as openings appear.
  void emit(int u) {
    out += atom_token(g.atom(u));
    auto closes = ring_close_at[static_cast<size_t>(u)];
    std::sort(closes.begin(), closes.end(), [&](int x, int y) {
      return digit_of_bond[static_cast<size_t>(x)] < digit_of_bond[static_cast<size_t>(y)];
    });
    for (int bi : closes) {
      const int d = digit_of_bond[static_cast<size_t>(bi)];
      out += ring_digit_token(d);
      free_digits.insert(d);
    }
    auto opens = ring_open_at[static_cast<size_t>(u)];
    std::sort(opens.begin(), opens.end(), [&](int x, int y) {
      const Bond& bx = g.bonds()[static_cast<size_t>(x)];
      const Bond& by = g.bonds()[static_cast<size_t>(y)];
      const int fx = bx.a == u ? bx.b : bx.a;
      const int fy = by.a == u ? by.b : by.a;
      return preorder_pos[static_cast<size_t>(fx)] < preorder_pos[static_cast<size_t>(fy)];
    });
    for (int bi : opens) {
      if (free_digits.empty()) throw data_error("too many simultaneous ring closures");
      const int d = *free_digits.begin();
      free_digits.erase(free_digits.begin());
      digit_of_bond[static_cast<size_t>(bi)] = d;
      out += bond_token(g, g.bonds()[static_cast<size_t>(bi)]);
      out += ring_digit_token(d);
    }
    const auto& kids = children[static_cast<size_t>(u)];
    for (size_t i = 0; i < kids.size(); ++i) {
      const int v = kids[static_cast<size_t>(i)];
      const Bond* b = g.find_bond(u, v);
      const std::string bt = bond_token(g, *b);
      if (i + 1 < kids.size()) {
        out += '(';
        out += bt;
        emit(v);
        out += ')';
      } else {
        out += bt;
        emit(v);
      }
    }
  }
};

}  // namespace

std::string write_smiles(const MolecularGraph& g) {
  if (auto e = check_graph(g)) throw e->to_error();
  if (g.num_atoms() == 0) throw data_error("cannot write an empty graph");
  const std::vector<int> ranks = canonical_ranks(g);

  // Group atoms into components; write each rooted at its min-rank atom.
  const int n = g.num_atoms();
  std::vector<int> comp(static_cast<size_t>(n), -1);
  int num_comp = 0;
  for (int i = 0; i < n; ++i) {
    if (comp[static_cast<size_t>(i)] != -1) continue;
    std::vector<int> stack = {i};
    comp[static_cast<size_t>(i)] = num_comp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (const auto& [v, bi] : g.neighbors(u))
        if (comp[static_cast<size_t>(v)] == -1) {
          comp[static_cast<size_t>(v)] = num_comp;
          stack.push_back(v);
        }
    }
    ++num_comp;
  }
  std::vector<std::string> parts;
  for (int c = 0; c < num_comp; ++c) {
    int root = -1;
    for (int i = 0; i < n; ++i) {
      if (comp[static_cast<size_t>(i)] != c) continue;
      if (root < 0 || ranks[static_cast<size_t>(i)] < ranks[static_cast<size_t>(root)]) root = i;
    }
    ComponentWriter writer(g, ranks);
    writer.plan(root);
    writer.emit(root);
    parts.push_back(std::move(writer.out));
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += '.';
    out += parts[i];
  }
  return out;
}

// --- validity --------------------------------------------------------------------

namespace {

// Order-free structural digest used to confirm a round trip preserved the
// molecule: per-atom attributes paired with canonical rank, and the edge set
// relabeled by rank.
std::vector<std::vector<int>> structure_digest(const MolecularGraph& g) {
  const std::vector<int> ranks = canonical_ranks(g);
  std::vector<std::vector<int>> digest;
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom& a = g.atom(i);
    digest.push_back({0, ranks[static_cast<size_t>(i)], static_cast<int>(a.element),
                      static_cast<int>(a.charge), static_cast<int>(a.explicit_h),
                      a.aromatic ? 1 : 0});
  }
  for (const Bond& b : g.bonds()) {
    const int ra = ranks[static_cast<size_t>(b.a)];
    const int rb = ranks[static_cast<size_t>(b.b)];
    digest.push_back({1, std::min(ra, rb), std::max(ra, rb), static_cast<int>(b.order)});
  }
  std::sort(digest.begin(), digest.end());
  return digest;
}

}  // namespace

bool is_valid(const MolecularGraph& g) {
  if (g.num_atoms() == 0) return false;
  const MolecularGraph sub = induced_subgraph(g, largest_component(g));
  if (find_violation(sub)) return false;
  std::string smiles;
  try {
    smiles = write_smiles(sub);
  } catch (const Error&) {
    return false;
  }
  auto reparsed = parse_smiles(smiles);
  if (!reparsed.ok()) return false;
  return structure_digest(sub) == structure_digest(reparsed.value());
}

std::string canonical_smiles_of_valid(const MolecularGraph& g) {
  if (!is_valid(g)) return "";
  return write_smiles(induced_subgraph(g, largest_component(g)));
}

}  // namespace moldiff
