//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/screener.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "binio.hpp"
#include "moldiff/checkpoint.hpp"
#include "moldiff/chem.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/molgraph.hpp"

namespace moldiff::screener {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'D', 'B'};
constexpr uint32_t kDbFormatVersion = 1;

void index_ids(FingerprintDB& db) {
  db.by_id.clear();
  db.by_id.reserve(db.records.size());
  for (size_t i = 0; i < db.records.size(); ++i) {
    if (db.records[i].id.empty() || !db.by_id.emplace(db.records[i].id, i).second) {
      throw data_error("fingerprint db: duplicate or empty record id: " + db.records[i].id);
    }
  }
}

uint64_t count_total(const std::vector<uint16_t>& counts) {
  uint64_t total = 0;
  for (uint16_t c : counts) total += c;
  return total;
}

// Exact similarity between the clamped query and a stored record, computed by
// the same min-max routine the linear-scan oracle uses.
double exact_score(std::span<const double> query, const FingerprintRecord& rec,
                   std::vector<double>& scratch) {
  scratch.assign(rec.counts.begin(), rec.counts.end());
  return tanimoto(query, scratch).take_or_throw();
}

// Ranking order: score descending, then id ascending.
bool ranks_before(double score_a, const std::string& id_a, double score_b,
                  const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace

FingerprintDB build_db(std::span<const SmilesRecord> records, BuildStats* stats) {
  BuildStats st;
  FingerprintDB db;
  std::unordered_set<std::string> seen_ids;
  std::unordered_set<std::string> seen_smiles;
  for (const SmilesRecord& rec : records) {
    ++st.lines;
    if (!seen_ids.insert(rec.id).second) {
      throw data_error("fingerprint db: duplicate record id: " + rec.id);
    }
    auto parsed = parse_smiles(rec.smiles);
    if (!parsed.ok()) {
      ++st.skipped;
      continue;
    }
    const std::string canonical = canonical_smiles_of_valid(parsed.value());
    if (canonical.empty()) {
      ++st.skipped;
      continue;
    }
    ++st.parsed;
    if (!seen_smiles.insert(canonical).second) {
      ++st.duplicates;
      continue;
    }
    const MolecularGraph mol =
        induced_subgraph(parsed.value(), largest_component(parsed.value()));
    const std::vector<uint32_t> fp = morgan_fingerprint(mol);
    FingerprintRecord out;
    out.id = rec.id;
    out.smiles = canonical;
    out.counts.resize(fp.size());
    for (size_t i = 0; i < fp.size(); ++i) {
      out.counts[i] = static_cast<uint16_t>(
          std::min<uint32_t>(fp[i], std::numeric_limits<uint16_t>::max()));
    }
    out.total = count_total(out.counts);
    db.records.push_back(std::move(out));
  }
  if (db.records.empty()) throw data_error("fingerprint db: empty corpus, no usable molecules");
  index_ids(db);
  if (stats) *stats = st;
  return db;
}

FingerprintDB build_db_file(const std::string& smiles_path, BuildStats* stats) {
  const std::vector<SmilesRecord> records = read_smiles_file(smiles_path);
  return build_db(records, stats);
}

std::vector<QueryHit> query_topk(const FingerprintDB& db, std::span<const double> query, int k,
                                 size_t* negatives_clamped) {
  if (query.size() != static_cast<size_t>(kFingerprintBits)) {
    throw data_error("query: expected " + std::to_string(kFingerprintBits) +
                     " dimensions, got " + std::to_string(query.size()));
  }
  if (k < 1 || static_cast<size_t>(k) > db.records.size()) {
    throw config_error("query: k must be in [1, " + std::to_string(db.records.size()) +
                       "], got " + std::to_string(k));
  }
  std::vector<double> q(query.begin(), query.end());
  size_t clamped = 0;
  double query_total = 0.0;
  for (double& v : q) {
    if (!std::isfinite(v)) throw data_error("query: non-finite entry");
    if (v < 0.0) {
      v = 0.0;
      ++clamped;
    }
    query_total += v;
  }
  if (negatives_clamped) *negatives_clamped = clamped;
  if (query_total == 0.0) throw data_error("query: all zero after clamping negatives");

  // Count-total bound: sum(min) <= min of the totals and sum(max) >= max of
  // the totals, so no record can score above min(totals)/max(totals). Records
  // are visited in descending bound order and scoring stops once the bound
  // falls strictly below the current kth-best score; records tying the bound
  // are still scored because an id tie-break could admit them.
  std::vector<size_t> order(db.records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> bound(db.records.size());
  for (size_t i = 0; i < db.records.size(); ++i) {
    const double lo = std::min(query_total, static_cast<double>(db.records[i].total));
    const double hi = std::max(query_total, static_cast<double>(db.records[i].total));
    bound[i] = hi == 0.0 ? 0.0 : lo / hi;
  }
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (bound[a] != bound[b]) return bound[a] > bound[b];
    return db.records[a].id < db.records[b].id;
  });

  // Kept set: the k best (score desc, id asc) seen so far, worst at front.
  struct Kept {
    double score;
    size_t index;
  };
  auto worse = [&](const Kept& a, const Kept& b) {
    return ranks_before(a.score, db.records[a.index].id, b.score, db.records[b.index].id);
  };
  std::vector<Kept> heap;  // min-heap by ranking order
  heap.reserve(static_cast<size_t>(k));
  std::vector<double> scratch;
  for (size_t idx : order) {
    if (heap.size() == static_cast<size_t>(k) && bound[idx] < heap.front().score) break;
    const double score = exact_score(q, db.records[idx], scratch);
    if (heap.size() < static_cast<size_t>(k)) {
      heap.push_back({score, idx});
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (ranks_before(score, db.records[idx].id, heap.front().score,
                            db.records[heap.front().index].id)) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = {score, idx};
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }

  std::sort(heap.begin(), heap.end(), [&](const Kept& a, const Kept& b) {
    return ranks_before(a.score, db.records[a.index].id, b.score, db.records[b.index].id);
  });
  std::vector<QueryHit> hits;
  hits.reserve(heap.size());
  for (const Kept& kept : heap) hits.push_back({db.records[kept.index].id, kept.score});
  return hits;
}

std::vector<ScreenEvalRow> screen_eval(const FingerprintDB& db,
                                       std::span<const ScreenQuery> queries,
                                       std::span<const int> ks) {
  if (queries.empty()) throw data_error("screen eval: no queries");
  if (ks.empty()) throw config_error("screen eval: no k values");
  int kmax = 0;
  for (int k : ks) {
    if (k < 1 || static_cast<size_t>(k) > db.records.size()) {
      throw config_error("screen eval: k must be in [1, " + std::to_string(db.records.size()) +
                         "], got " + std::to_string(k));
    }
    kmax = std::max(kmax, k);
  }
  for (const ScreenQuery& q : queries) {
    if (db.by_id.find(q.truth_id) == db.by_id.end()) {
      throw data_error("screen eval: unknown ground-truth id: " + q.truth_id);
    }
  }

  // One ranking at the largest k per query; every smaller k is a prefix.
  std::vector<std::vector<double>> score_prefix(queries.size());
  std::vector<size_t> truth_pos(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    const std::vector<QueryHit> ranking = query_topk(db, queries[i].query, kmax);
    score_prefix[i].resize(ranking.size() + 1, 0.0);
    truth_pos[i] = ranking.size();
    for (size_t r = 0; r < ranking.size(); ++r) {
      score_prefix[i][r + 1] = score_prefix[i][r] + ranking[r].score;
      if (ranking[r].id == queries[i].truth_id) truth_pos[i] = r;
    }
  }

  std::vector<ScreenEvalRow> rows;
  rows.reserve(ks.size());
  for (int k : ks) {
    ScreenEvalRow row;
    row.k = k;
    double sim_sum = 0.0;
    size_t hits = 0;
    for (size_t i = 0; i < queries.size(); ++i) {
      sim_sum += score_prefix[i][static_cast<size_t>(k)] / k;
      if (truth_pos[i] < static_cast<size_t>(k)) ++hits;
    }
    row.mean_topk_similarity = sim_sum / static_cast<double>(queries.size());
    row.hit_rate = static_cast<double>(hits) / static_cast<double>(queries.size());
    rows.push_back(row);
  }
  return rows;
}

void save_db(const FingerprintDB& db, const std::string& path) {
  if (db.records.empty()) throw data_error("fingerprint db: refusing to save empty database");
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  binio::put_u32(buf, kDbFormatVersion);
  binio::put_u64(buf, db.records.size());
  binio::put_u32(buf, static_cast<uint32_t>(kFingerprintBits));
  for (const FingerprintRecord& rec : db.records) {
    if (rec.counts.size() != static_cast<size_t>(kFingerprintBits)) {
      throw data_error("fingerprint db: record " + rec.id + " has wrong fingerprint width");
    }
    binio::put_u32(buf, static_cast<uint32_t>(rec.id.size()));
    buf.insert(buf.end(), rec.id.begin(), rec.id.end());
    binio::put_u32(buf, static_cast<uint32_t>(rec.smiles.size()));
    buf.insert(buf.end(), rec.smiles.begin(), rec.smiles.end());
    for (uint16_t c : rec.counts) binio::put_u16(buf, c);
  }
  binio::put_u64(buf, crc64(buf.data(), buf.size()));
  binio::write_binary_file(path, buf, "fingerprint db");
}

FingerprintDB load_db(const std::string& path) {
  const std::vector<uint8_t> buf = binio::read_binary_file(path, "fingerprint db");
  if (buf.size() < 4 + 4 + 8) throw data_error("fingerprint db: truncated file");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw data_error("fingerprint db: bad magic");
  binio::Reader r{buf.data(), buf.size() - 8, 4, "fingerprint db"};
  const uint32_t version = r.u32();
  if (version != kDbFormatVersion) {
    throw config_error("fingerprint db: format version " + std::to_string(version) +
                       " not supported (expected " + std::to_string(kDbFormatVersion) + ")");
  }
  if (crc64(buf.data(), buf.size() - 8) != binio::trailing_u64(buf)) {
    throw data_error("fingerprint db: checksum mismatch, file corrupt");
  }

  const uint64_t count = r.u64();
  const uint32_t dim = r.u32();
  if (dim != static_cast<uint32_t>(kFingerprintBits)) {
    throw data_error("fingerprint db: unsupported fingerprint width " + std::to_string(dim));
  }
  if (count == 0) throw data_error("fingerprint db: empty database");
  // Each record carries at least its fingerprint payload.
  if (count > (r.len - r.pos) / (2 * static_cast<uint64_t>(dim))) {
    throw data_error("fingerprint db: truncated file");
  }
  FingerprintDB db;
  db.records.reserve(static_cast<size_t>(count));
  for (uint64_t i = 0; i < count; ++i) {
    FingerprintRecord rec;
    rec.id = r.str(r.u32());
    rec.smiles = r.str(r.u32());
    rec.counts.resize(dim);
    for (uint32_t j = 0; j < dim; ++j) rec.counts[j] = r.u16();
    rec.total = count_total(rec.counts);
    if (rec.smiles.empty()) throw data_error("fingerprint db: empty SMILES, file corrupt");
    db.records.push_back(std::move(rec));
  }
  if (r.pos != r.len) throw data_error("fingerprint db: trailing bytes, file corrupt");
  index_ids(db);
  return db;
}

}  // namespace moldiff::screener
