#pragma once

#include "smsat/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace smsat::text {

/// Shortest round-trip decimal form, '.' separator, locale independent.
std::string fmt(double v);

/// Fixed-precision form for human-facing tables.
std::string fmt_fixed(double v, int digits);

/// Comma-separated rows with LF endings. Cells are written as given.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  std::string str() const { return out_; }
  void save(const std::filesystem::path& file) const;

 private:
  std::size_t width_;
  std::string out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& file);

void write_text(const std::filesystem::path& file, std::string_view content);
std::string read_text(const std::filesystem::path& file);

/// Pretty JSON (2-space indent, trailing LF).
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

}  // namespace smsat::text
