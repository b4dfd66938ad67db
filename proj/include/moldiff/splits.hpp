//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_SPLITS_HPP_
#define MOLDIFF_SPLITS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moldiff/textio.hpp"

namespace moldiff::splits {

enum class Partition { kTrain = 0, kVal = 1, kTest = 2 };

const char* partition_name(Partition p);
Partition partition_from_name(std::string_view name);  // throws a data error

// Which protocol produced an assignment; decides the leakage axes the audit
// enforces rather than merely reports.
enum class SplitProtocol { kRandom = 0, kScaffold = 1, kCell = 2 };

const char* protocol_name(SplitProtocol p);

struct SplitAssignment {
  SplitProtocol protocol = SplitProtocol::kRandom;
  std::map<std::string, Partition> assignment;  // record id -> partition
  std::vector<std::string> dropped;             // downsampled records, no partition
  bool unsplittable = false;                    // some partition ended up empty

  std::array<long, 3> counts() const;
};

// Seeded uniform shuffle, then an 85:10:5 cut with exact largest-remainder
// counts. Needs at least 20 records.
SplitAssignment random_split(std::span<const DatasetRecord> ds, uint64_t seed);

// Groups records by ring-and-linker scaffold, forces trivial scaffolds
// (heavy-atom count <= trivial_max_atoms, the empty scaffold included) into
// train downsampled to at most the median cluster size, then assigns whole
// non-trivial clusters largest-first to the partition with the greatest
// relative deficit against the 85:10:5 targets. No scaffold ever spans two
// partitions. Unparsable SMILES is an error naming the record.
SplitAssignment scaffold_split(std::span<const DatasetRecord> ds, uint64_t seed,
                               int trivial_max_atoms = 6);

// Records from held-out tissues go to test; the rest is split 89:11
// train:val by whole cell lines (largest line first, greatest relative
// deficit). Deterministic, no seed. Held-out tissues must exist in the data.
SplitAssignment cell_split(std::span<const DatasetRecord> ds,
                           const std::set<std::string>& held_out_tissues);

struct LeakageReport {
  SplitProtocol protocol = SplitProtocol::kRandom;
  long scaffold_overlap = 0;        // scaffolds present in more than one partition
  long cell_line_overlap = 0;       // cell lines present in more than one partition
  long duplicate_smiles_cross = 0;  // molecules present in more than one partition
  std::vector<std::string> offending_ids;  // records behind guarded-axis overlaps
  bool pass = false;

  // Stable "key<TAB>value" lines.
  std::string to_text() const;
};

// Reports all three overlap axes for any assignment; PASS means the axes the
// split's protocol guards are all zero (random guards none, scaffold guards
// scaffold + duplicate molecules, cell guards cell lines). Dropped records
// are excluded. Never throws on odd record content.
LeakageReport leakage_audit(std::span<const DatasetRecord> ds, const SplitAssignment& split);

// `id,partition` table, rows sorted by id.
void write_split_file(const std::string& path, const SplitAssignment& split);
std::map<std::string, Partition> read_split_file(const std::string& path);

}  // namespace moldiff::splits

#endif  // MOLDIFF_SPLITS_HPP_
