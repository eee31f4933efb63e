#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgrl/causal/gram.hpp"
#include "cgrl/core/error.hpp"
#include "cgrl/core/tensor.hpp"

namespace cgrl::harness {

/// Numeric table whose header row names variable blocks: columns sharing a
/// name form one (possibly multi-dimensional) variable.
struct MiTable {
  std::vector<std::string> block_names;  // in first-appearance order
  std::vector<Tensor> blocks;            // each rows x block_width
};

inline MiTable read_numeric_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("mi table: cannot open " + path);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> fields;
    const bool comma = s.find(',') != std::string::npos;
    std::stringstream ss(s);
    std::string field;
    if (comma) {
      while (std::getline(ss, field, ',')) {
        const auto a = field.find_first_not_of(" \t\r");
        const auto b = field.find_last_not_of(" \t\r");
        fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
      }
    } else {
      while (ss >> field) fields.push_back(field);
    }
    return fields;
  };

  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split(line);
    break;
  }
  if (header.empty()) throw FormatError("mi table: missing header row");

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw FormatError("mi table: row width does not match header");
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& f : fields) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(f, &pos));
        if (pos != f.size()) throw FormatError("mi table: non-numeric value " + f);
      } catch (const std::logic_error&) {
        throw FormatError("mi table: non-numeric value " + f);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw FormatError("mi table: need at least 2 sample rows");

  MiTable table;
  std::vector<std::vector<std::size_t>> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::size_t k = 0;
    for (; k < table.block_names.size(); ++k)
      if (table.block_names[k] == header[c]) break;
    if (k == table.block_names.size()) {
      table.block_names.push_back(header[c]);
      columns.emplace_back();
    }
    columns[k].push_back(c);
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    Tensor block({rows.size(), columns[k].size()});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < columns[k].size(); ++c) block(r, c) = rows[r][columns[k][c]];
    table.blocks.push_back(std::move(block));
  }
  return table;
}

struct MiEstimate {
  std::vector<std::string> names;
  std::vector<double> entropies;  // S_alpha per block
  double mi = 0.0;                // I_alpha(block1; block2)
  bool has_conditional = false;
  double conditional_mi = 0.0;    // I_alpha(block1; block2 | block3)
};

/// Entropy of each block, mutual information of the first two, and (given a
/// third block) conditional MI of the first two given the third.
inline MiEstimate mi_estimate(const MiTable& table, double alpha) {
  if (table.blocks.size() < 2)
    throw ConfigError("mi-estimate: need at least two named blocks, got " +
                      std::to_string(table.blocks.size()));
  MiEstimate est;
  est.names = table.block_names;
  for (const Tensor& block : table.blocks)
    est.entropies.push_back(renyi_entropy(gram(block), alpha));
  est.mi = mutual_information(table.blocks[0], table.blocks[1], alpha);
  if (table.blocks.size() >= 3) {
    est.has_conditional = true;
    est.conditional_mi =
        conditional_mi(table.blocks[0], table.blocks[1], table.blocks[2], alpha);
  }
  return est;
}

}  // namespace cgrl::harness
