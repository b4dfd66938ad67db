//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#include "moldiff/textio.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moldiff/errors.hpp"

namespace moldiff {

namespace {

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  return in;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  return out;
}

void finish_write(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw io_error("write failed: " + path);
}

// Strips a trailing '\r' so CRLF files parse like LF files.
std::string chomp(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_skippable(const std::string& line) {
  return line.empty() || line[0] == '#';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

double parse_number(const std::string& text, const std::string& path, size_t line) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw data_error(path + ":" + std::to_string(line) + ": not a number: '" + text + "'");
  }
  return v;
}

long parse_integer(const std::string& text, const std::string& path, size_t line) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    throw data_error(path + ":" + std::to_string(line) + ": not an integer: '" + text + "'");
  }
  return v;
}

std::string population_header(long dim) {
  std::string h = "id,phase,cluster";
  for (long i = 0; i < dim; ++i) h += ",e" + std::to_string(i);
  return h;
}

}  // namespace

std::vector<SmilesRecord> read_smiles_file(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::vector<SmilesRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_skippable(line)) continue;
    SmilesRecord rec;
    rec.line = line_no;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      rec.smiles = line;
      char buf[24];
      std::snprintf(buf, sizeof(buf), "m%06zu", records.size());
      rec.id = buf;
    } else {
      rec.smiles = line.substr(0, tab);
      rec.id = line.substr(tab + 1);
      if (rec.id.empty() || rec.smiles.empty()) {
        throw data_error(path + ":" + std::to_string(line_no) + ": empty SMILES or id");
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_smiles_file(const std::string& path, std::span<const SmilesRecord> records) {
  std::ofstream out = open_for_write(path);
  for (const auto& rec : records) {
    out << rec.smiles << '\t' << rec.id << '\n';
  }
  finish_write(out, path);
}

std::vector<DatasetRecord> read_dataset_index(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  std::vector<DatasetRecord> records;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_skippable(line)) continue;
    if (!header_seen) {
      if (line != "id,smiles,cell_line,tissue,tumor_type") {
        throw data_error(path + ":" + std::to_string(line_no) +
                         ": expected header 'id,smiles,cell_line,tissue,tumor_type'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() != 5) {
      throw data_error(path + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      throw data_error(path + ":" + std::to_string(line_no) + ": empty record id");
    }
    if (!seen_ids.insert(fields[0]).second) {
      throw data_error(path + ":" + std::to_string(line_no) + ": duplicate record id '" +
                       fields[0] + "'");
    }
    records.push_back({fields[0], fields[1], fields[2], fields[3], fields[4]});
  }
  if (!header_seen) throw data_error(path + ": missing header row");
  return records;
}

void write_dataset_index(const std::string& path, std::span<const DatasetRecord> records) {
  std::ofstream out = open_for_write(path);
  out << "id,smiles,cell_line,tissue,tumor_type\n";
  for (const auto& r : records) {
    out << r.id << ',' << r.smiles << ',' << r.cell_line << ',' << r.tissue << ','
        << r.tumor_type << '\n';
  }
  finish_write(out, path);
}

PopulationFile read_cell_population(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::string line;
  size_t line_no = 0;
  long dim = -1;
  PopulationFile out;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_skippable(line)) continue;
    auto fields = split_csv(line);
    if (dim < 0) {
      if (fields.size() < 4 || fields[0] != "id" || fields[1] != "phase" ||
          fields[2] != "cluster") {
        throw data_error(path + ":" + std::to_string(line_no) +
                         ": expected header 'id,phase,cluster,e0..'");
      }
      dim = static_cast<long>(fields.size()) - 3;
      for (long i = 0; i < dim; ++i) {
        if (fields[static_cast<size_t>(3 + i)] != "e" + std::to_string(i)) {
          throw data_error(path + ":" + std::to_string(line_no) +
                           ": embedding columns must be named e0..e" + std::to_string(dim - 1));
        }
      }
      continue;
    }
    if (static_cast<long>(fields.size()) != 3 + dim) {
      throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(3 + dim) + " fields, got " +
                       std::to_string(fields.size()));
    }
    out.ids.push_back(fields[0]);
    try {
      out.population.phase_labels.push_back(tfe::phase_from_name(fields[1]));
    } catch (const Error& e) {
      throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    out.population.cluster_labels.push_back(
        static_cast<int>(parse_integer(fields[2], path, line_no)));
    for (long i = 0; i < dim; ++i) {
      values.push_back(parse_number(fields[static_cast<size_t>(3 + i)], path, line_no));
    }
  }
  if (dim < 0) throw data_error(path + ": missing header row");
  if (out.ids.empty()) throw data_error(path + ": no cells");
  out.population.embeddings =
      tfe::RowMatrix(static_cast<long>(out.ids.size()), dim);
  out.population.embeddings.data = std::move(values);
  return out;
}

void write_cell_population(const std::string& path, std::span<const std::string> ids,
                           const tfe::CellPopulation& population) {
  const long n = population.embeddings.rows;
  const long d = population.embeddings.cols;
  if (static_cast<long>(ids.size()) != n ||
      static_cast<long>(population.phase_labels.size()) != n ||
      static_cast<long>(population.cluster_labels.size()) != n) {
    throw data_error("write_cell_population: mismatched row counts");
  }
  std::ofstream out = open_for_write(path);
  out << population_header(d) << '\n';
  std::ostringstream row;
  for (long i = 0; i < n; ++i) {
    row.str("");
    row << ids[static_cast<size_t>(i)] << ','
        << tfe::phase_name(population.phase_labels[static_cast<size_t>(i)]) << ','
        << population.cluster_labels[static_cast<size_t>(i)];
    for (long j = 0; j < d; ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", population.embeddings.at(i, j));
      row << ',' << buf;
    }
    out << row.str() << '\n';
  }
  finish_write(out, path);
}

std::vector<PairRecord> read_pair_manifest(const std::string& path) {
  std::ifstream in = open_for_read(path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute() || base.empty()) return p;
    return (base / fp).string();
  };
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  std::vector<PairRecord> records;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    line = chomp(line);
    if (is_skippable(line)) continue;
    if (!header_seen) {
      if (line != "pair_id,pre_file,post_file,target_smiles") {
        throw data_error(path + ":" + std::to_string(line_no) +
                         ": expected header 'pair_id,pre_file,post_file,target_smiles'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() != 4) {
      throw data_error(path + ":" + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[0].empty() || !seen_ids.insert(fields[0]).second) {
      throw data_error(path + ":" + std::to_string(line_no) + ": missing or duplicate pair id");
    }
    records.push_back({fields[0], resolve(fields[1]), resolve(fields[2]), fields[3]});
  }
  if (!header_seen) throw data_error(path + ": missing header row");
  return records;
}

void write_pair_manifest(const std::string& path, std::span<const PairRecord> records) {
  std::ofstream out = open_for_write(path);
  out << "pair_id,pre_file,post_file,target_smiles\n";
  for (const auto& r : records) {
    out << r.pair_id << ',' << r.pre_file << ',' << r.post_file << ',' << r.target_smiles
        << '\n';
  }
  finish_write(out, path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in = open_for_read(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out = open_for_write(path);
  out << text;
  finish_write(out, path);
}

}  // namespace moldiff
