//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_SCREENER_HPP_
#define MOLDIFF_SCREENER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "moldiff/textio.hpp"

namespace moldiff::screener {

// One database entry: a deduplicated molecule with its count fingerprint and
// the precomputed count total used by the retrieval pruning bound.
struct FingerprintRecord {
  std::string id;
  std::string smiles;            // canonical
  std::vector<uint16_t> counts;  // kFingerprintBits buckets, saturated at u16 max
  uint64_t total = 0;            // sum of counts
};

struct FingerprintDB {
  std::vector<FingerprintRecord> records;
  std::unordered_map<std::string, size_t> by_id;

  const FingerprintRecord* find(const std::string& id) const {
    auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : &records[it->second];
  }
};

struct BuildStats {
  size_t lines = 0;       // input records seen
  size_t parsed = 0;      // parsable and valid
  size_t skipped = 0;     // unparsable or invalid, logged by the caller
  size_t duplicates = 0;  // canonical-SMILES collisions folded into the first id
};

// Builds a deduplicated fingerprint database. Records that fail to parse are
// skipped and counted; duplicate canonical SMILES keep the first id. Explicit
// duplicate input ids are an error; an input producing no records is too.
FingerprintDB build_db(std::span<const SmilesRecord> records, BuildStats* stats = nullptr);
FingerprintDB build_db_file(const std::string& smiles_path, BuildStats* stats = nullptr);

struct QueryHit {
  std::string id;
  double score = 0.0;
};

// Exact top-k retrieval by min-max similarity, descending score with ties
// broken by ascending id. Negative query entries are clamped to zero (count
// reported through `negatives_clamped` when given); a query that is all zero
// after clamping is an error, as is k outside [1, |db|]. The count-total
// pruning bound shortcuts low-bound records but never changes the answer.
std::vector<QueryHit> query_topk(const FingerprintDB& db, std::span<const double> query, int k,
                                 size_t* negatives_clamped = nullptr);

struct ScreenQuery {
  std::vector<double> query;  // kFingerprintBits wide
  std::string truth_id;       // must exist in the database
};

struct ScreenEvalRow {
  int k = 0;
  double mean_topk_similarity = 0.0;  // mean over queries of the top-k score average
  double hit_rate = 0.0;              // fraction of queries whose truth is in the top k
};

std::vector<ScreenEvalRow> screen_eval(const FingerprintDB& db,
                                       std::span<const ScreenQuery> queries,
                                       std::span<const int> ks);

// Database file: magic "FPDB", version u32, record count u64, dimension u32,
// then per record id/SMILES as length-prefixed bytes plus the u16 counts,
// trailing CRC64. Same error families as the model checkpoint reader.
void save_db(const FingerprintDB& db, const std::string& path);
FingerprintDB load_db(const std::string& path);

}  // namespace moldiff::screener

#endif  // MOLDIFF_SCREENER_HPP_
