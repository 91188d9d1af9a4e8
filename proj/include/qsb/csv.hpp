#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qsb/errors.hpp"

namespace qsb::csv {

/// Shortest text that round-trips every double: 17 significant digits.
inline std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// RFC 4180 field quoting.
inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class Writer {
 public:
  /// Writes to a file it owns.
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
      : name_(path.string()), file_(path, std::ios::binary), out_(&file_) {
    require(static_cast<bool>(file_), ErrorCode::IoError, "cannot write " + name_);
    write_header(header);
  }

  /// Writes to a borrowed stream.
  Writer(std::ostream& out, const std::vector<std::string>& header) : name_("<stream>"), out_(&out) {
    write_header(header);
  }

  void row(const std::vector<double>& values) {
    require(values.size() == columns_, ErrorCode::DimensionMismatch,
            "row width does not match the header of " + name_);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) *out_ << ',';
      *out_ << format(values[i]);
    }
    *out_ << "\r\n";
  }

  void close() {
    out_->flush();
    if (file_.is_open()) file_.close();
    require(!out_->fail() && !file_.fail(), ErrorCode::IoError, "failed writing " + name_);
  }

 private:
  void write_header(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) *out_ << ',';
      *out_ << quote(header[i]);
    }
    *out_ << "\r\n";
    columns_ = header.size();
  }

  std::string name_;
  std::ofstream file_;
  std::ostream* out_;
  std::size_t columns_ = 0;
};

/// strtod-based so that subnormal values (which std::stod rejects) survive a
/// round trip.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorCode::IoError, "missing column '" + name + "'");
  }
};

/// Numeric table with a header row. Quoted header fields are unquoted; data
/// fields must be plain numbers.
inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  Table t;
  std::string line;
  int number = 0;
  const auto split = [](std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (quoted) {
        if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    return fields;
  };
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    require(fields.size() == t.header.size(), ErrorCode::IoError,
            path.string() + ":" + std::to_string(number) + ": expected " +
                std::to_string(t.header.size()) + " fields");
    std::vector<double> row;
    for (const auto& f : fields) {
      double v = 0.0;
      require(parse_double(f, v), ErrorCode::IoError,
              path.string() + ":" + std::to_string(number) + ": bad number '" + f + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  require(!t.header.empty(), ErrorCode::IoError, path.string() + " is empty");
  return t;
}

}  // namespace qsb::csv
