//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/screener.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "moldiff/checkpoint.hpp"
#include "moldiff/chem.hpp"
#include "moldiff/errors.hpp"
#include "moldiff/molgraph.hpp"
#include "moldiff/rng.hpp"
#include "support/molgen.hpp"

using namespace moldiff;
using namespace moldiff::screener;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

template <typename F>
std::optional<ErrorKind> kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

std::vector<SmilesRecord> corpus_records(const std::vector<std::string>& smiles) {
  std::vector<SmilesRecord> recs;
  for (size_t i = 0; i < smiles.size(); ++i) {
    recs.push_back({"id" + std::to_string(i), smiles[i], i + 1});
  }
  return recs;
}

// A corpus of random valid molecules, diverse enough that most records are
// structurally distinct.
std::vector<SmilesRecord> random_corpus(uint64_t seed, size_t n) {
  Rng rng(seed);
  std::vector<std::string> smiles;
  for (size_t i = 0; i < n; ++i) {
    smiles.push_back(write_smiles(testsupport::random_molecule(rng)));
  }
  return corpus_records(smiles);
}

std::vector<double> fingerprint_of(const std::string& smiles) {
  auto g = parse_smiles(smiles);
  REQUIRE(g.ok());
  return to_double_vector(morgan_fingerprint(g.value()));
}

// Reference ranking: score every record with the public similarity routine,
// sort by (score descending, id ascending), take the first k.
std::vector<QueryHit> linear_scan_topk(const FingerprintDB& db, std::span<const double> query,
                                       int k) {
  std::vector<double> q(query.begin(), query.end());
  for (double& v : q) v = std::max(v, 0.0);
  std::vector<QueryHit> all;
  for (const FingerprintRecord& rec : db.records) {
    std::vector<double> b(rec.counts.begin(), rec.counts.end());
    all.push_back({rec.id, tanimoto(q, b).take_or_throw()});
  }
  std::sort(all.begin(), all.end(), [](const QueryHit& a, const QueryHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  all.resize(static_cast<size_t>(k));
  return all;
}

std::vector<uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Rewrites the trailing CRC so structural edits test the parser, not the
// checksum gate.
void fix_crc(std::vector<uint8_t>& bytes) {
  const uint64_t crc = crc64(bytes.data(), bytes.size() - 8);
  for (int i = 0; i < 8; ++i) {
    bytes[bytes.size() - 8 + static_cast<size_t>(i)] = static_cast<uint8_t>(crc >> (8 * i));
  }
}

}  // namespace

TEST_CASE("build keeps one record per distinct molecule") {
  auto db = build_db(corpus_records({"CCO", "CCN", "CCC"}));
  CHECK(db.records.size() == 3);
  CHECK(db.find("id0") != nullptr);
  CHECK(db.find("id1") != nullptr);
  CHECK(db.find("id2") != nullptr);
  CHECK(db.find("missing") == nullptr);
}

TEST_CASE("build deduplicates spellings of the same molecule keeping the first id") {
  BuildStats st;
  auto db = build_db(corpus_records({"CCO", "OCC", "C(O)C", "CCN"}), &st);
  CHECK(db.records.size() == 2);
  REQUIRE(db.find("id0") != nullptr);  // first ethanol spelling wins
  CHECK(db.find("id1") == nullptr);
  CHECK(db.find("id2") == nullptr);
  CHECK(st.lines == 4);
  CHECK(st.parsed == 4);
  CHECK(st.duplicates == 2);
  CHECK(st.skipped == 0);
}

TEST_CASE("build skips unparsable and invalid lines and counts them") {
  BuildStats st;
  auto db = build_db(corpus_records({"CCO", "xyz(", "O=O=O", "CCN"}), &st);
  CHECK(db.records.size() == 2);
  CHECK(st.lines == 4);
  CHECK(st.parsed == 2);
  CHECK(st.skipped == 2);  // one syntax failure, one valence failure
  CHECK(st.duplicates == 0);
}

TEST_CASE("build rejects empty corpora and duplicate input ids") {
  CHECK(kind_of([] { build_db(corpus_records({})); }) == ErrorKind::kData);
  CHECK(kind_of([] { build_db(corpus_records({"xyz(", "abc)"})); }) == ErrorKind::kData);
  std::vector<SmilesRecord> dup = {{"a", "CCO", 1}, {"a", "CCN", 2}};
  CHECK_THROWS_WITH_AS(build_db(dup), doctest::Contains("duplicate record id"), Error);
}

TEST_CASE("build is deterministic across runs") {
  const auto recs = random_corpus(404, 60);
  BuildStats st1, st2;
  auto a = build_db(recs, &st1);
  auto b = build_db(recs, &st2);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].id == b.records[i].id);
    CHECK(a.records[i].smiles == b.records[i].smiles);
    CHECK(a.records[i].counts == b.records[i].counts);
    CHECK(a.records[i].total == b.records[i].total);
  }
  CHECK(st1.lines == st2.lines);

  const auto p1 = temp_file("screener_det_1.fpdb");
  const auto p2 = temp_file("screener_det_2.fpdb");
  save_db(a, p1.string());
  save_db(b, p2.string());
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("a member's own fingerprint retrieves it with score one") {
  auto db = build_db(corpus_records({"CCO", "CCN", "c1ccccc1", "CC(C)C"}));
  for (const FingerprintRecord& rec : db.records) {
    const auto hits = query_topk(db, fingerprint_of(rec.smiles), 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].id == rec.id);
    CHECK(hits[0].score == 1.0);
  }
}

TEST_CASE("ranked scores are monotone non-increasing") {
  auto db = build_db(random_corpus(77, 40));
  const auto q = fingerprint_of("CCO");
  const auto hits = query_topk(db, q, static_cast<int>(db.records.size()));
  REQUIRE(hits.size() == db.records.size());
  for (size_t i = 1; i < hits.size(); ++i) {
    CHECK(hits[i - 1].score >= hits[i].score);
  }
}

TEST_CASE("two-entry comparison matches the hand-computed scores") {
  FingerprintDB db;
  FingerprintRecord a;
  a.id = "A";
  a.smiles = "CCO";
  a.counts.assign(kFingerprintBits, 0);
  a.counts[0] = 2;
  a.counts[1] = 1;
  a.total = 3;
  FingerprintRecord b;
  b.id = "B";
  b.smiles = "CCN";
  b.counts.assign(kFingerprintBits, 0);
  b.counts[1] = 1;
  b.counts[2] = 2;
  b.total = 3;
  db.records = {a, b};
  db.by_id = {{"A", 0}, {"B", 1}};

  std::vector<double> q(kFingerprintBits, 0.0);
  q[0] = 2.0;
  q[1] = 1.0;
  const auto hits = query_topk(db, q, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].id == "A");
  CHECK(hits[0].score == 1.0);
  CHECK(hits[1].id == "B");
  // min-sum 1 over max-sum 5.
  CHECK(hits[1].score == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("exact score ties are broken by ascending id") {
  FingerprintDB db;
  for (const char* id : {"zeta", "alpha", "mid"}) {
    FingerprintRecord rec;
    rec.id = id;
    rec.smiles = std::string("M") + id;
    rec.counts.assign(kFingerprintBits, 0);
    rec.counts[5] = 3;  // identical fingerprints, identical scores
    rec.total = 3;
    db.records.push_back(std::move(rec));
  }
  db.by_id = {{"zeta", 0}, {"alpha", 1}, {"mid", 2}};
  std::vector<double> q(kFingerprintBits, 0.0);
  q[5] = 1.0;
  const auto hits = query_topk(db, q, 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].id == "alpha");
  CHECK(hits[1].id == "mid");
  CHECK(hits[2].id == "zeta");
  CHECK(hits[0].score == hits[2].score);

  // k below the tie group size still keeps the id-ascending winners.
  const auto top2 = query_topk(db, q, 2);
  CHECK(top2[0].id == "alpha");
  CHECK(top2[1].id == "mid");
}

TEST_CASE("pruned retrieval equals the linear scan on random queries") {
  auto db = build_db(random_corpus(2026, 120));
  const size_t n = db.records.size();
  REQUIRE(n >= 50);
  Rng rng(555);
  const int ks[] = {1, 3, 10, static_cast<int>(n)};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(kFingerprintBits, 0.0);
    const int flavor = trial % 3;
    if (flavor == 0) {
      // Sparse continuous query with a few negative entries to clamp.
      for (int j = 0; j < 60; ++j) {
        q[rng.uniform_int(kFingerprintBits)] = rng.uniform() * 4.0 - 0.5;
      }
    } else if (flavor == 1) {
      // A member fingerprint, noised.
      const auto& rec = db.records[rng.uniform_int(n)];
      for (size_t j = 0; j < q.size(); ++j) q[j] = rec.counts[j];
      for (int j = 0; j < 30; ++j) q[rng.uniform_int(kFingerprintBits)] += rng.uniform();
    } else {
      for (double& v : q) v = rng.uniform();
    }
    const int k = ks[static_cast<size_t>(trial) % std::size(ks)];
    const auto got = query_topk(db, q, k);
    const auto want = linear_scan_topk(db, q, k);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].id == want[i].id);
      CHECK(got[i].score == want[i].score);  // exact, same arithmetic
    }
  }
}

TEST_CASE("repeated identical queries return identical rankings") {
  auto db = build_db(random_corpus(31, 50));
  Rng rng(8);
  std::vector<double> q(kFingerprintBits, 0.0);
  for (int j = 0; j < 100; ++j) q[rng.uniform_int(kFingerprintBits)] = rng.uniform();
  const auto first = query_topk(db, q, 10);
  for (int rep = 0; rep < 5; ++rep) {
    const auto again = query_topk(db, q, 10);
    REQUIRE(again.size() == first.size());
    for (size_t i = 0; i < first.size(); ++i) {
      CHECK(again[i].id == first[i].id);
      CHECK(again[i].score == first[i].score);
    }
  }
}

TEST_CASE("query validation rejects bad k, zero queries, and bad widths") {
  auto db = build_db(corpus_records({"CCO", "CCN"}));
  std::vector<double> q(kFingerprintBits, 1.0);
  CHECK(kind_of([&] { query_topk(db, q, 0); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { query_topk(db, q, 3); }) == ErrorKind::kConfig);
  CHECK_NOTHROW((void)query_topk(db, q, 2));

  std::vector<double> zeros(kFingerprintBits, 0.0);
  CHECK(kind_of([&] { query_topk(db, zeros, 1); }) == ErrorKind::kData);

  // All-negative queries clamp to zero and are rejected, with the count
  // reported.
  std::vector<double> negs(kFingerprintBits, -0.25);
  size_t clamped = 0;
  CHECK_THROWS_WITH_AS((void)query_topk(db, negs, 1, &clamped),
                       doctest::Contains("all zero"), Error);
  CHECK(clamped == static_cast<size_t>(kFingerprintBits));

  std::vector<double> narrow(16, 1.0);
  CHECK(kind_of([&] { query_topk(db, narrow, 1); }) == ErrorKind::kData);

  std::vector<double> nan_q(kFingerprintBits, 1.0);
  nan_q[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK(kind_of([&] { query_topk(db, nan_q, 1); }) == ErrorKind::kData);
}

TEST_CASE("negative clamping matches clamping before the query") {
  auto db = build_db(random_corpus(99, 30));
  Rng rng(4);
  std::vector<double> q(kFingerprintBits, 0.0);
  for (int j = 0; j < 200; ++j) {
    q[rng.uniform_int(kFingerprintBits)] = rng.uniform() * 2.0 - 1.0;
  }
  std::vector<double> clamped = q;
  size_t negatives = 0;
  for (double& v : clamped) {
    if (v < 0.0) {
      v = 0.0;
      ++negatives;
    }
  }
  size_t reported = 0;
  const auto a = query_topk(db, q, 5, &reported);
  const auto b = query_topk(db, clamped, 5);
  CHECK(reported == negatives);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("screen eval on exact member fingerprints is perfect at every k") {
  auto db = build_db(corpus_records({"CCO", "CCN", "c1ccccc1", "CC(C)C", "CC=O"}));
  std::vector<ScreenQuery> queries;
  for (const FingerprintRecord& rec : db.records) {
    queries.push_back({fingerprint_of(rec.smiles), rec.id});
  }
  const int ks[] = {1, 2, 3, 5};
  const auto rows = screen_eval(db, queries, ks);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(row.hit_rate == 1.0);
  CHECK(rows[0].k == 1);
  CHECK(rows[0].mean_topk_similarity == 1.0);
}

TEST_CASE("screen eval is monotone in k") {
  auto db = build_db(random_corpus(1234, 80));
  Rng rng(65);
  std::vector<ScreenQuery> queries;
  for (int i = 0; i < 25; ++i) {
    const auto& rec = db.records[rng.uniform_int(db.records.size())];
    ScreenQuery q;
    q.truth_id = rec.id;
    q.query.assign(kFingerprintBits, 0.0);
    for (size_t j = 0; j < q.query.size(); ++j) q.query[j] = rec.counts[j];
    // Heavy noise so the truth is frequently outside the very top ranks.
    for (int j = 0; j < 400; ++j) {
      q.query[rng.uniform_int(kFingerprintBits)] += rng.uniform() * 3.0;
    }
    queries.push_back(std::move(q));
  }
  const int ks[] = {1, 2, 5, 10, 20, 40};
  const auto rows = screen_eval(db, queries, ks);
  REQUIRE(rows.size() == std::size(ks));
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].hit_rate >= rows[i - 1].hit_rate);
    CHECK(rows[i].mean_topk_similarity <= rows[i - 1].mean_topk_similarity + 1e-12);
  }
  // The noise must actually spread the ranks for the monotonicity check to
  // bite; top-1 should not already be perfect.
  CHECK(rows[0].hit_rate < 1.0);
  CHECK(rows.back().hit_rate > rows[0].hit_rate);
}

TEST_CASE("screen eval validates ground truth ids and k values") {
  auto db = build_db(corpus_records({"CCO", "CCN"}));
  std::vector<ScreenQuery> queries = {{fingerprint_of("CCO"), "nope"}};
  const int ks[] = {1};
  CHECK_THROWS_WITH_AS(screen_eval(db, queries, ks), doctest::Contains("unknown ground-truth"),
                       Error);
  queries[0].truth_id = "id0";
  const int bad_ks[] = {1, 5};
  CHECK(kind_of([&] { screen_eval(db, queries, bad_ks); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { screen_eval(db, queries, {}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { screen_eval(db, {}, ks); }) == ErrorKind::kData);
}

TEST_CASE("database file round trips and reloads queries bit-identically") {
  auto db = build_db(random_corpus(808, 40));
  const auto path = temp_file("screener_rt.fpdb");
  save_db(db, path.string());
  const FingerprintDB back = load_db(path.string());
  REQUIRE(back.records.size() == db.records.size());
  for (size_t i = 0; i < db.records.size(); ++i) {
    CHECK(back.records[i].id == db.records[i].id);
    CHECK(back.records[i].smiles == db.records[i].smiles);
    CHECK(back.records[i].counts == db.records[i].counts);
    CHECK(back.records[i].total == db.records[i].total);
  }
  const auto q = fingerprint_of("CCO");
  const auto a = query_topk(db, q, 10);
  const auto b = query_topk(back, q, 10);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].score == b[i].score);
  }
}

TEST_CASE("database file damage is detected") {
  auto db = build_db(corpus_records({"CCO", "CCN", "CCC"}));
  const auto path = temp_file("screener_damage.fpdb");
  save_db(db, path.string());
  const std::vector<uint8_t> good = read_bytes(path);

  SUBCASE("missing file is an io error") {
    CHECK(kind_of([] { load_db("/nonexistent_dir_zz/x.fpdb"); }) == ErrorKind::kIo);
  }
  SUBCASE("unwritable path is an io error") {
    CHECK(kind_of([&] { save_db(db, "/nonexistent_dir_zz/x.fpdb"); }) == ErrorKind::kIo);
  }
  SUBCASE("truncations") {
    for (size_t keep : {size_t{0}, size_t{3}, size_t{10}, good.size() / 2, good.size() - 1}) {
      std::vector<uint8_t> cut(good.begin(), good.begin() + static_cast<long>(keep));
      write_bytes(path, cut);
      CHECK(kind_of([&] { load_db(path.string()); }) == ErrorKind::kData);
    }
  }
  SUBCASE("bad magic") {
    std::vector<uint8_t> bad = good;
    bad[0] ^= 0xFF;
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(load_db(path.string()), doctest::Contains("magic"), Error);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::vector<uint8_t> bad = good;
    bad[good.size() / 2] ^= 0x01;
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(load_db(path.string()), doctest::Contains("checksum"), Error);
  }
  SUBCASE("future version is a config error") {
    std::vector<uint8_t> bad = good;
    bad[4] = 0x7F;
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(load_db(path.string()), doctest::Contains("version"), Error);
    CHECK(kind_of([&] { load_db(path.string()); }) == ErrorKind::kConfig);
  }
  SUBCASE("wrong fingerprint width is rejected even with a valid checksum") {
    std::vector<uint8_t> bad = good;
    bad[16] = 16;  // dim low byte: 2048 -> 16
    bad[17] = 0;
    fix_crc(bad);
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(load_db(path.string()), doctest::Contains("width"), Error);
  }
  SUBCASE("zero records is rejected even with a valid checksum") {
    // Keep only the header, set count to zero, restore the checksum.
    std::vector<uint8_t> bad(good.begin(), good.begin() + 20);
    for (size_t i = 8; i < 16; ++i) bad[i] = 0;
    bad.insert(bad.end(), 8, 0);
    fix_crc(bad);
    write_bytes(path, bad);
    CHECK_THROWS_WITH_AS(load_db(path.string()), doctest::Contains("empty"), Error);
  }
  SUBCASE("trailing garbage is rejected") {
    std::vector<uint8_t> bad = good;
    bad.insert(bad.end() - 8, {1, 2, 3, 4});
    write_bytes(path, bad);
    CHECK(kind_of([&] { load_db(path.string()); }) == ErrorKind::kData);
  }
}

TEST_CASE("build from a corpus file matches build from records") {
  const auto recs = random_corpus(22, 25);
  const auto path = temp_file("screener_corpus.smi");
  write_smiles_file(path.string(), recs);
  BuildStats st_file;
  auto from_file = build_db_file(path.string(), &st_file);
  auto from_recs = build_db(recs);
  REQUIRE(from_file.records.size() == from_recs.records.size());
  for (size_t i = 0; i < from_file.records.size(); ++i) {
    CHECK(from_file.records[i].id == from_recs.records[i].id);
    CHECK(from_file.records[i].counts == from_recs.records[i].counts);
  }
  CHECK(st_file.lines == 25);
}
