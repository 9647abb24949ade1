#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "mhfdia/error.hpp"

namespace mhfdia {

// Column-oriented numeric table with string metadata; used for per-step
// traces and sweep summaries alike.
struct SimTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> metadata;
  bool truncated = false;  // run aborted early (e.g. filter divergence)

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ConfigError("trace has no column '" + name + "'");
  }

  std::vector<double> series(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  void add_row(std::vector<double> row) {
    if (row.size() != columns.size()) throw ConfigError("trace row width does not match the header");
    rows.push_back(std::move(row));
  }
};

// 12 significant digits, shared by every exporter.
inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

inline double round_significant(double x) { return std::stod(format_number(x)); }

inline std::string to_csv(const SimTrace& t) {
  std::ostringstream os;
  for (const auto& [k, v] : t.metadata) os << "# " << k << " = " << v << "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_number(r[i]);
    os << "\n";
  }
  return os.str();
}

inline SimTrace from_csv(const std::string& text) {
  SimTrace t;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) t.metadata[line.substr(2, eq - 2)] = line.substr(eq + 3);
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    if (!header) {
      while (std::getline(ls, cell, ',')) t.columns.push_back(cell);
      header = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    t.add_row(std::move(row));
  }
  return t;
}

inline nlohmann::json to_json(const SimTrace& t) {
  nlohmann::json j;
  j["metadata"] = t.metadata;
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row = nlohmann::json::array();
    for (double x : r) row.push_back(round_significant(x));
    j["rows"].push_back(std::move(row));
  }
  return j;
}

inline SimTrace from_json(const nlohmann::json& j) {
  SimTrace t;
  t.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) t.add_row(r.get<std::vector<double>>());
  return t;
}

enum class ExportFormat { csv, json };

inline ExportFormat parse_export_format(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "json") return ExportFormat::json;
  throw ConfigError("unknown export format '" + s + "'");
}

struct ExportOptions {
  ExportFormat format = ExportFormat::csv;
  bool gzip = false;
};

inline std::string render(const SimTrace& t, ExportFormat f) {
  return f == ExportFormat::csv ? to_csv(t) : to_json(t).dump(1) + "\n";
}

// Writes the table and returns the path actually written (".gz" appended
// when compressing).
inline std::string export_trace(const SimTrace& t, const std::string& path, const ExportOptions& opt = {}) {
  const std::string body = render(t, opt.format);
  if (opt.gzip) {
    const std::string gz_path = path + ".gz";
    gzFile f = gzopen(gz_path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + gz_path + " for writing");
    const int written = gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
    gzclose(f);
    if (written != static_cast<int>(body.size())) throw std::runtime_error("short write to " + gz_path);
    return gz_path;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path);
  return path;
}

}  // namespace mhfdia
