//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/splits.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "moldiff/chem.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/molgraph.hpp"
#include "moldiff/rng.hpp"
#include "moldiff/tfe.hpp"

namespace moldiff::splits {

namespace {

constexpr long kRatioTrain = 17;  // 85:10:5 over a denominator of 20
constexpr long kRatioVal = 2;
constexpr long kRatioTest = 1;

void check_unique_ids(std::span<const DatasetRecord> ds, const char* what) {
  std::set<std::string> seen;
  for (const DatasetRecord& r : ds) {
    if (r.id.empty() || !seen.insert(r.id).second) {
      throw data_error(std::string(what) + ": missing or duplicate record id '" + r.id + "'");
    }
  }
}

// Seeded Fisher-Yates over indices.
std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  return idx;
}

// Grouping key for leakage purposes: the canonical scaffold when computable,
// otherwise the raw string behind a sentinel so unparsable or pathological
// records still group deterministically instead of aborting an audit.
std::string scaffold_key(const std::string& smiles, int* scaffold_atoms) {
  auto parsed = parse_smiles(smiles);
  if (!parsed.ok()) {
    if (scaffold_atoms) *scaffold_atoms = -1;
    return "!" + smiles;
  }
  try {
    const ScaffoldResult sc = bemis_murcko_scaffold(parsed.value());
    if (scaffold_atoms) *scaffold_atoms = sc.num_atoms;
    return sc.smiles;
  } catch (const std::exception&) {
    if (scaffold_atoms) *scaffold_atoms = parsed.value().num_atoms();
    return "!" + smiles;
  }
}

// Identity key for duplicate-molecule detection; raw string behind a sentinel
// when no canonical form exists.
std::string molecule_key(const std::string& smiles) {
  auto parsed = parse_smiles(smiles);
  if (parsed.ok()) {
    const std::string canonical = canonical_smiles_of_valid(parsed.value());
    if (!canonical.empty()) return canonical;
  }
  return "!" + smiles;
}

// Index of the partition with the greatest deficit relative to its target;
// earlier partitions win ties, so train fills before val before test.
size_t argmax_relative_deficit(const std::array<long, 3>& target,
                               const std::array<long, 3>& count, size_t parts) {
  size_t best = 0;
  double best_d = -1e300;
  for (size_t p = 0; p < parts; ++p) {
    const double d = static_cast<double>(target[p] - count[p]) /
                     static_cast<double>(std::max<long>(target[p], 1));
    if (d > best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

void flag_empty_partitions(SplitAssignment& split) {
  const std::array<long, 3> c = split.counts();
  split.unsplittable = c[0] == 0 || c[1] == 0 || c[2] == 0;
}

}  // namespace

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kTrain:
      return "train";
    case Partition::kVal:
      return "val";
    case Partition::kTest:
      return "test";
  }
  throw config_error("unknown partition");
}

Partition partition_from_name(std::string_view name) {
  if (name == "train") return Partition::kTrain;
  if (name == "val") return Partition::kVal;
  if (name == "test") return Partition::kTest;
  throw data_error("unknown partition name '" + std::string(name) + "'");
}

const char* protocol_name(SplitProtocol p) {
  switch (p) {
    case SplitProtocol::kRandom:
      return "random";
    case SplitProtocol::kScaffold:
      return "scaffold";
    case SplitProtocol::kCell:
      return "cell";
  }
  throw config_error("unknown protocol");
}

std::array<long, 3> SplitAssignment::counts() const {
  std::array<long, 3> c{0, 0, 0};
  for (const auto& [id, p] : assignment) c[static_cast<size_t>(p)] += 1;
  return c;
}

SplitAssignment random_split(std::span<const DatasetRecord> ds, uint64_t seed) {
  check_unique_ids(ds, "random split");
  if (ds.size() < 20) {
    throw data_error("random split: need at least 20 records, got " + std::to_string(ds.size()));
  }
  const long ratios[] = {kRatioTrain, kRatioVal, kRatioTest};
  const std::vector<long> take =
      tfe::largest_remainder_allocation(ratios, static_cast<long>(ds.size()));
  Rng rng(Rng::derive(seed, "splits/random"));
  const std::vector<size_t> order = shuffled_indices(ds.size(), rng);
  SplitAssignment split;
  split.protocol = SplitProtocol::kRandom;
  size_t cursor = 0;
  for (size_t p = 0; p < 3; ++p) {
    for (long i = 0; i < take[p]; ++i, ++cursor) {
      split.assignment[ds[order[cursor]].id] = static_cast<Partition>(p);
    }
  }
  flag_empty_partitions(split);
  return split;
}

SplitAssignment scaffold_split(std::span<const DatasetRecord> ds, uint64_t seed,
                               int trivial_max_atoms) {
  check_unique_ids(ds, "scaffold split");
  if (trivial_max_atoms < 0) {
    throw config_error("scaffold split: trivial_max_atoms must be non-negative");
  }
  if (ds.empty()) throw data_error("scaffold split: empty dataset");

  struct Cluster {
    int scaffold_atoms = 0;
    std::vector<size_t> members;  // indices into ds, in input order
  };
  std::map<std::string, Cluster> clusters;  // ordered key -> deterministic walk
  for (size_t i = 0; i < ds.size(); ++i) {
    auto parsed = parse_smiles(ds[i].smiles);
    if (!parsed.ok()) {
      throw data_error("scaffold split: record '" + ds[i].id + "': unparsable SMILES '" +
                       ds[i].smiles + "'");
    }
    int atoms = 0;
    const std::string key = scaffold_key(ds[i].smiles, &atoms);
    Cluster& c = clusters[key];
    c.scaffold_atoms = atoms;
    c.members.push_back(i);
  }

  // Median cluster size (lower median), before any downsampling.
  std::vector<size_t> sizes;
  sizes.reserve(clusters.size());
  for (const auto& [key, c] : clusters) sizes.push_back(c.members.size());
  std::sort(sizes.begin(), sizes.end());
  const size_t median_size = sizes[(sizes.size() - 1) / 2];

  SplitAssignment split;
  split.protocol = SplitProtocol::kScaffold;

  // Trivial scaffolds go to train, each cluster capped at the median size.
  std::array<long, 3> count{0, 0, 0};
  struct Pending {
    const std::string* key;
    const Cluster* cluster;
  };
  std::vector<Pending> pending;
  size_t cluster_index = 0;
  for (const auto& [key, c] : clusters) {
    const bool trivial = c.scaffold_atoms >= 0 &&
                         (c.scaffold_atoms == 0 || c.scaffold_atoms <= trivial_max_atoms);
    if (!trivial) {
      pending.push_back({&key, &c});
      ++cluster_index;
      continue;
    }
    std::vector<size_t> members = c.members;
    if (members.size() > median_size) {
      Rng rng(Rng::derive(seed, "splits/scaffold", cluster_index));
      const std::vector<size_t> order = shuffled_indices(members.size(), rng);
      std::vector<size_t> kept;
      for (size_t j = 0; j < members.size(); ++j) {
        if (j < median_size) {
          kept.push_back(members[order[j]]);
        } else {
          split.dropped.push_back(ds[members[order[j]]].id);
        }
      }
      std::sort(kept.begin(), kept.end());
      members = std::move(kept);
    }
    for (size_t m : members) split.assignment[ds[m].id] = Partition::kTrain;
    count[0] += static_cast<long>(members.size());
    ++cluster_index;
  }

  // Whole-cluster greedy assignment, largest cluster first.
  const long kept_total =
      count[0] + static_cast<long>(std::accumulate(
                     pending.begin(), pending.end(), size_t{0},
                     [](size_t acc, const Pending& p) { return acc + p.cluster->members.size(); }));
  const long ratios[] = {kRatioTrain, kRatioVal, kRatioTest};
  const std::vector<long> take_v = tfe::largest_remainder_allocation(ratios, kept_total);
  const std::array<long, 3> target{take_v[0], take_v[1], take_v[2]};
  std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    if (a.cluster->members.size() != b.cluster->members.size()) {
      return a.cluster->members.size() > b.cluster->members.size();
    }
    return *a.key < *b.key;
  });
  for (const Pending& p : pending) {
    const size_t part = argmax_relative_deficit(target, count, 3);
    for (size_t m : p.cluster->members) {
      split.assignment[ds[m].id] = static_cast<Partition>(part);
    }
    count[part] += static_cast<long>(p.cluster->members.size());
  }
  std::sort(split.dropped.begin(), split.dropped.end());
  flag_empty_partitions(split);
  return split;
}

SplitAssignment cell_split(std::span<const DatasetRecord> ds,
                           const std::set<std::string>& held_out_tissues) {
  check_unique_ids(ds, "cell split");
  if (ds.empty()) throw data_error("cell split: empty dataset");
  std::set<std::string> tissues;
  std::map<std::string, std::string> line_tissue;
  for (const DatasetRecord& r : ds) {
    if (r.tissue.empty()) {
      throw data_error("cell split: record '" + r.id + "' has no tissue tag");
    }
    if (r.cell_line.empty()) {
      throw data_error("cell split: record '" + r.id + "' has no cell line tag");
    }
    tissues.insert(r.tissue);
    // A cell line belongs to one tissue; a conflict would let the line
    // straddle test and train/val, so it is rejected as corrupt data.
    const auto [it, inserted] = line_tissue.emplace(r.cell_line, r.tissue);
    if (!inserted && it->second != r.tissue) {
      throw data_error("cell split: cell line '" + r.cell_line +
                       "' appears under multiple tissues");
    }
  }
  for (const std::string& t : held_out_tissues) {
    if (tissues.find(t) == tissues.end()) {
      throw data_error("cell split: unknown tissue '" + t + "'");
    }
  }

  SplitAssignment split;
  split.protocol = SplitProtocol::kCell;
  std::map<std::string, std::vector<size_t>> lines;  // retained cell lines
  long retained = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (held_out_tissues.count(ds[i].tissue) != 0) {
      split.assignment[ds[i].id] = Partition::kTest;
    } else {
      lines[ds[i].cell_line].push_back(i);
      ++retained;
    }
  }

  // Whole cell lines, largest first, into an 89:11 train:val cut.
  struct Line {
    const std::string* name;
    const std::vector<size_t>* members;
  };
  std::vector<Line> order;
  order.reserve(lines.size());
  for (const auto& [name, members] : lines) order.push_back({&name, &members});
  std::sort(order.begin(), order.end(), [](const Line& a, const Line& b) {
    if (a.members->size() != b.members->size()) return a.members->size() > b.members->size();
    return *a.name < *b.name;
  });
  const long ratios[] = {89, 11};
  const std::vector<long> take_v = tfe::largest_remainder_allocation(ratios, retained);
  const std::array<long, 3> target{take_v[0], take_v[1], 0};
  std::array<long, 3> count{0, 0, 0};
  for (const Line& line : order) {
    const size_t part = argmax_relative_deficit(target, count, 2);
    for (size_t m : *line.members) {
      split.assignment[ds[m].id] = static_cast<Partition>(part);
    }
    count[part] += static_cast<long>(line.members->size());
  }
  flag_empty_partitions(split);
  return split;
}

LeakageReport leakage_audit(std::span<const DatasetRecord> ds, const SplitAssignment& split) {
  LeakageReport report;
  report.protocol = split.protocol;
  const std::set<std::string> dropped(split.dropped.begin(), split.dropped.end());

  struct Axis {
    std::map<std::string, std::set<Partition>> parts;
    std::map<std::string, std::vector<std::string>> ids;
  };
  Axis scaffold_axis, line_axis, smiles_axis;
  auto note = [](Axis& axis, const std::string& key, Partition p, const std::string& id) {
    axis.parts[key].insert(p);
    axis.ids[key].push_back(id);
  };
  std::set<std::string> seen;  // first occurrence of an id wins; audits never throw
  for (const DatasetRecord& r : ds) {
    if (!seen.insert(r.id).second) continue;
    if (dropped.count(r.id) != 0) continue;
    const auto it = split.assignment.find(r.id);
    if (it == split.assignment.end()) continue;
    const Partition p = it->second;
    note(scaffold_axis, scaffold_key(r.smiles, nullptr), p, r.id);
    note(smiles_axis, molecule_key(r.smiles), p, r.id);
    if (!r.cell_line.empty()) note(line_axis, r.cell_line, p, r.id);
  }

  std::set<std::string> offenders;
  auto tally = [&offenders](const Axis& axis, bool guarded) {
    long overlaps = 0;
    for (const auto& [key, parts] : axis.parts) {
      if (parts.size() < 2) continue;
      ++overlaps;
      if (guarded) {
        const auto& ids = axis.ids.at(key);
        offenders.insert(ids.begin(), ids.end());
      }
    }
    return overlaps;
  };
  const bool guard_scaffold = split.protocol == SplitProtocol::kScaffold;
  const bool guard_cell = split.protocol == SplitProtocol::kCell;
  report.scaffold_overlap = tally(scaffold_axis, guard_scaffold);
  report.duplicate_smiles_cross = tally(smiles_axis, guard_scaffold);
  report.cell_line_overlap = tally(line_axis, guard_cell);
  report.offending_ids.assign(offenders.begin(), offenders.end());
  long guarded_total = 0;
  if (guard_scaffold) guarded_total += report.scaffold_overlap + report.duplicate_smiles_cross;
  if (guard_cell) guarded_total += report.cell_line_overlap;
  report.pass = guarded_total == 0;
  return report;
}

std::string LeakageReport::to_text() const {
  std::string out;
  out += std::string("protocol\t") + protocol_name(protocol) + "\n";
  out += "scaffold_overlap\t" + std::to_string(scaffold_overlap) + "\n";
  out += "cell_line_overlap\t" + std::to_string(cell_line_overlap) + "\n";
  out += "duplicate_smiles_cross\t" + std::to_string(duplicate_smiles_cross) + "\n";
  out += std::string("status\t") + (pass ? "PASS" : "FAIL") + "\n";
  out += "offending\t";
  for (size_t i = 0; i < offending_ids.size(); ++i) {
    if (i > 0) out += ",";
    out += offending_ids[i];
  }
  out += "\n";
  return out;
}

void write_split_file(const std::string& path, const SplitAssignment& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << "id,partition\n";
  for (const auto& [id, p] : split.assignment) {
    out << id << ',' << partition_name(p) << '\n';
  }
  out.flush();
  if (!out) throw io_error("write failed: " + path);
}

std::map<std::string, Partition> read_split_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::map<std::string, Partition> out;
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "id,partition") {
        throw data_error(path + ":" + std::to_string(line_no) +
                         ": expected header 'id,partition'");
      }
      header_seen = true;
      continue;
    }
    const size_t comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw data_error(path + ":" + std::to_string(line_no) + ": expected 2 fields");
    }
    const std::string id = line.substr(0, comma);
    if (id.empty() || out.count(id) != 0) {
      throw data_error(path + ":" + std::to_string(line_no) + ": missing or duplicate id");
    }
    try {
      out[id] = partition_from_name(line.substr(comma + 1));
    } catch (const Error& e) {
      throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw data_error(path + ": missing header row");
  return out;
}

}  // namespace moldiff::splits
