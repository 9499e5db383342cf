#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace fueltrends::io {

struct Csv {
  std::string path;
  std::vector<std::string> header;
  // each row checked to header size; double quotes protect embedded commas
  // and are stripped from the parsed fields
  std::vector<std::vector<std::string>> rows;
  // 1-based file line for error messages (header is line 1)
  int line_of_row(size_t r) const { return static_cast<int>(r) + 2; }
};

Csv read_csv(const std::string& path);
void expect_header(const Csv& csv, const std::vector<std::string>& expected);

// Throwing converters that prefix "path:line:" to the message.
double parse_double(const std::string& s, const std::string& ctx);
long long parse_int(const std::string& s, const std::string& ctx);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);
void write_text(const std::string& path, const std::string& content);

// Fixed-format numbers for data products; %.12g keeps reruns byte-identical.
std::string fmt(double x);
// Full round-trip precision, used where a file is read back as input.
std::string fmt_exact(double x);

void ensure_dir(const std::string& path);

}  // namespace fueltrends::io
