#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "propfit/errors.hpp"
#include "propfit/model.hpp"

namespace propfit::io {

struct CsvRow {
  std::string curve;
  double x = 0.0;
  double y = 0.0;
};

// Parsed input table. Curves are kept in order of first appearance.
struct InputTable {
  bool has_curve_column = false;
  std::vector<CsvRow> rows;

  [[nodiscard]] std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (std::find(out.begin(), out.end(), r.curve) == out.end()) out.push_back(r.curve);
    }
    return out;
  }

  [[nodiscard]] std::vector<Dataset> curves() const {
    std::vector<Dataset> out;
    for (const auto& label : labels()) {
      std::vector<Observation> obs;
      for (const auto& r : rows) {
        if (r.curve == label) obs.push_back({r.x, r.y});
      }
      out.emplace_back(std::move(obs));
    }
    return out;
  }

  friend bool operator==(const InputTable& a, const InputTable& b) {
    if (a.has_curve_column != b.has_curve_column || a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      const auto& p = a.rows[i];
      const auto& q = b.rows[i];
      if (p.curve != q.curve || p.x != q.x || p.y != q.y) return false;
    }
    return true;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_number(std::string_view s, std::size_t line, const char* column) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("line " + std::to_string(line) + ": column '" + column + "' is not a number: '" + std::string(s) + "'");
  }
  if (!std::isfinite(v)) throw InputError("line " + std::to_string(line) + ": non-finite value in column '" + column + "'");
  return v;
}

}  // namespace detail

// Header required; columns x and y plus an optional curve label, in any order.
// Blank lines are skipped. Missing curve column means every row is curve "1".
[[nodiscard]] inline InputTable parse_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  InputTable t;
  int ix = -1;
  int iy = -1;
  int ic = -1;
  std::size_t ncol = 0;
  bool header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = detail::trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = detail::split_fields(line);
    if (!header) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string_view f = fields[i];
        int* slot = f == "x" ? &ix : f == "y" ? &iy : f == "curve" ? &ic : nullptr;
        if (slot == nullptr) throw InputError("line " + std::to_string(line_no) + ": unknown column '" + std::string(f) + "' (expected curve, x, y)");
        if (*slot >= 0) throw InputError("line " + std::to_string(line_no) + ": duplicate column '" + std::string(f) + "'");
        *slot = static_cast<int>(i);
      }
      if (ix < 0 || iy < 0) throw InputError("header must name columns x and y");
      ncol = fields.size();
      t.has_curve_column = ic >= 0;
      header = true;
      continue;
    }
    if (fields.size() != ncol) {
      throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncol) + " fields, found " +
                       std::to_string(fields.size()));
    }
    CsvRow r;
    r.curve = ic >= 0 ? std::string(fields[static_cast<std::size_t>(ic)]) : std::string("1");
    if (r.curve.empty()) throw InputError("line " + std::to_string(line_no) + ": empty curve label");
    r.x = detail::parse_number(fields[static_cast<std::size_t>(ix)], line_no, "x");
    r.y = detail::parse_number(fields[static_cast<std::size_t>(iy)], line_no, "y");
    t.rows.push_back(std::move(r));
    if (end == text.size()) break;
  }
  if (!header) throw InputError("CSV input is empty");
  if (t.rows.empty()) throw InputError("CSV input has a header but no data rows");
  return t;
}

[[nodiscard]] inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[nodiscard]] inline InputTable read_csv_file(const std::string& path) { return parse_csv(read_text_file(path)); }

// %.17g round-trips every double exactly.
[[nodiscard]] inline std::string write_csv(const InputTable& t) {
  std::string out = t.has_curve_column ? "curve,x,y\n" : "x,y\n";
  char buf[64];
  for (const auto& r : t.rows) {
    if (t.has_curve_column) {
      if (r.curve.find_first_of(",\r\n") != std::string::npos) throw InputError("curve labels may not contain commas or newlines");
      out += r.curve;
      out += ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.x, r.y);
    out += buf;
  }
  return out;
}

[[nodiscard]] inline InputTable make_table(const std::vector<std::pair<std::string, Dataset>>& curves) {
  InputTable t;
  t.has_curve_column = true;
  for (const auto& [label, data] : curves) {
    for (const auto& o : data) t.rows.push_back({label, o.x, o.y});
  }
  return t;
}

}  // namespace propfit::io
