// SPDX-License-Identifier: Apache-2.0
#include "slim/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "slim/errors.hpp"

namespace slim {

namespace {

constexpr const char* kHeader = "experiment,params,metric,value,units,reps,warmup";

// Fields are quoted only when they contain a comma or quote.
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void BenchReport::add(std::string experiment, std::string params,
                      std::string metric, double value, std::string units,
                      std::uint64_t reps, std::uint64_t warmup) {
  rows.push_back({std::move(experiment), std::move(params), std::move(metric),
                  value, std::move(units), reps, warmup});
}

void BenchReport::footer(std::string note) { footers.push_back(std::move(note)); }

std::string BenchReport::to_csv() const {
  std::string out = kHeader;
  out += '\n';
  for (const BenchRow& r : rows) {
    out += csv_escape(r.experiment);
    out += ',';
    out += csv_escape(r.params);
    out += ',';
    out += csv_escape(r.metric);
    out += ',';
    out += format_value(r.value);
    out += ',';
    out += csv_escape(r.units);
    out += ',';
    out += std::to_string(r.reps);
    out += ',';
    out += std::to_string(r.warmup);
    out += '\n';
  }
  for (const std::string& f : footers) {
    out += "# ";
    out += f;
    out += '\n';
  }
  return out;
}

BenchReport BenchReport::from_csv(const std::string& text) {
  BenchReport report;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      report.footers.push_back(line.substr(2));
      continue;
    }
    if (!saw_header) {
      if (line != kHeader)
        throw ConfigError("unexpected CSV header: " + line);
      saw_header = true;
      continue;
    }
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 7) throw ConfigError("malformed CSV row: " + line);
    BenchRow row;
    row.experiment = f[0];
    row.params = f[1];
    row.metric = f[2];
    row.value = std::strtod(f[3].c_str(), nullptr);
    row.units = f[4];
    row.reps = std::strtoull(f[5].c_str(), nullptr, 10);
    row.warmup = std::strtoull(f[6].c_str(), nullptr, 10);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string BenchReport::to_table() const {
  const std::vector<std::string> head = {"experiment", "params", "metric",
                                         "value",      "units",  "reps",
                                         "warmup"};
  std::vector<std::vector<std::string>> cells;
  cells.push_back(head);
  for (const BenchRow& r : rows) {
    char value[64];
    std::snprintf(value, sizeof(value), "%.6g", r.value);
    cells.push_back({r.experiment, r.params, r.metric, value, r.units,
                     std::to_string(r.reps), std::to_string(r.warmup)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());

  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      out += cells[r][c];
      if (c + 1 < cells[r].size())
        out += std::string(width[c] - cells[r][c].size() + 2, ' ');
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c)
        total += width[c] + (c + 1 < width.size() ? 2 : 0);
      out += std::string(total, '-');
      out += '\n';
    }
  }
  for (const std::string& f : footers) {
    out += "note: ";
    out += f;
    out += '\n';
  }
  return out;
}

}  // namespace slim
