//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_TEXTIO_HPP_
#define MOLDIFF_TEXTIO_HPP_

#include <span>
#include <string>
#include <vector>

#include "moldiff/tfe.hpp"

namespace moldiff {

// One line of a SMILES corpus file. Format: `SMILES<TAB>optional-id` per
// line, UTF-8; blank lines and lines starting with '#' are skipped. Records
// without an explicit id get "m" plus the zero-padded record ordinal.
struct SmilesRecord {
  std::string id;
  std::string smiles;
  size_t line = 0;  // 1-based source line, for diagnostics
};

std::vector<SmilesRecord> read_smiles_file(const std::string& path);
void write_smiles_file(const std::string& path, std::span<const SmilesRecord> records);

// Row of a dataset index: comma-separated with the exact header
// `id,smiles,cell_line,tissue,tumor_type`. Record ids must be unique.
struct DatasetRecord {
  std::string id;
  std::string smiles;
  std::string cell_line;
  std::string tissue;
  std::string tumor_type;
};

std::vector<DatasetRecord> read_dataset_index(const std::string& path);
void write_dataset_index(const std::string& path, std::span<const DatasetRecord> records);

// Cell population file: header `id,phase,cluster,e0..e<d-1>`; one cell per
// row. The embedding width is taken from the header.
struct PopulationFile {
  std::vector<std::string> ids;
  tfe::CellPopulation population;
};

PopulationFile read_cell_population(const std::string& path);
void write_cell_population(const std::string& path, std::span<const std::string> ids,
                           const tfe::CellPopulation& population);

// Pair manifest: comma-separated with header
// `pair_id,pre_file,post_file,target_smiles`; file paths are resolved
// relative to the manifest's directory when not absolute.
struct PairRecord {
  std::string pair_id;
  std::string pre_file;
  std::string post_file;
  std::string target_smiles;
};

std::vector<PairRecord> read_pair_manifest(const std::string& path);
void write_pair_manifest(const std::string& path, std::span<const PairRecord> records);

// Whole-file helpers used by report writers.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace moldiff

#endif  // MOLDIFF_TEXTIO_HPP_
