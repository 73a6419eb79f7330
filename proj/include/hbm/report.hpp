#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "hbm/config.hpp"

namespace hbm {

/// Doubles with 17 significant digits; nan and inf spelled out.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return RunConfig::format_real(v);
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

using Cell = std::variant<std::string, double, std::int64_t, std::uint64_t, bool>;

inline std::string cell_text(const Cell& c) {
  struct V {
    std::string operator()(const std::string& s) const { return csv_field(s); }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(std::uint64_t u) const { return std::to_string(u); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  };
  return std::visit(V{}, c);
}

/// CSV table with '#' provenance lines ahead of the header.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> columns)
      : out_(out), columns_(std::move(columns)) {}

  void provenance(const std::string& command, std::uint64_t seed, const RunConfig& cfg) {
    out_ << "# command=" << command << '\n'
         << "# version=" << kVersion << '\n'
         << "# seed=" << seed << '\n'
         << "# config_hash=" << cfg.hash_hex() << '\n';
  }

  void header() {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      out_ << (i ? "," : "") << csv_field(columns_[i]);
    }
    out_ << "\r\n";
  }

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != columns_.size()) {
      throw std::logic_error("CsvWriter: row width does not match header");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out_ << (i ? "," : "") << cell_text(cells[i]);
    }
    out_ << "\r\n";
  }

 private:
  std::ostream& out_;
  std::vector<std::string> columns_;
};

}  // namespace hbm
