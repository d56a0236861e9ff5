#pragma once

// Result tables rendered as Markdown (3 decimals) and TSV (shortest
// round-trip representation, %g style). Both renderings come from the same
// cells.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "mqmeval/error.hpp"

namespace mqmeval::report {

/// A cell is text or a number; NaN renders as "n/a". A number may carry a
/// marker (e.g. "*") appended in Markdown only.
struct Number {
  double value = 0.0;
  std::string marker;
};

using Cell = std::variant<std::string, Number, long>;

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size())
      throw Error("table '" + title + "': row has " + std::to_string(row.size()) + " cells, header " +
                  std::to_string(header.size()));
    rows.push_back(std::move(row));
  }
};

inline std::string fixed3(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

inline std::string exact(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

inline std::string markdown_cell(const Cell& c) {
  if (auto s = std::get_if<std::string>(&c)) return *s;
  if (auto n = std::get_if<Number>(&c)) return fixed3(n->value) + n->marker;
  return std::to_string(std::get<long>(c));
}

inline std::string tsv_cell(const Cell& c) {
  if (auto s = std::get_if<std::string>(&c)) return *s;
  if (auto n = std::get_if<Number>(&c)) return exact(n->value);
  return std::to_string(std::get<long>(c));
}

inline std::string to_markdown(const Table& t) {
  std::string out;
  if (!t.title.empty()) out += "### " + t.title + "\n\n";
  auto line = [&](const std::vector<std::string>& cells) {
    out += "|";
    for (const auto& c : cells) out += " " + c + " |";
    out += "\n";
  };
  line(t.header);
  out += "|";
  for (std::size_t i = 0; i < t.header.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
  out += "\n";
  for (const auto& row : t.rows) {
    std::vector<std::string> cells;
    for (const auto& c : row) cells.push_back(markdown_cell(c));
    line(cells);
  }
  return out;
}

inline std::string to_tsv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += '\t';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& row : t.rows) {
    std::vector<std::string> cells;
    for (const auto& c : row) cells.push_back(tsv_cell(c));
    line(cells);
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

/// Writes `<dir>/<stem>.md` and `<dir>/<stem>.tsv`.
inline void write_table(const std::filesystem::path& dir, const std::string& stem, const Table& t) {
  write_file(dir / (stem + ".md"), to_markdown(t));
  write_file(dir / (stem + ".tsv"), to_tsv(t));
}

}  // namespace mqmeval::report
