#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sflab/tensor.hpp"

namespace sflab {

enum class ReportFormat { kCsv, kJson };

ReportFormat parse_format(std::string_view name);
std::string_view format_name(ReportFormat f);

using ReportCell = std::variant<std::string, std::int64_t, double>;

/// A table with a fixed column order. Rows keep insertion order.
struct Report {
  std::vector<std::string> columns;
  std::vector<std::vector<ReportCell>> rows;

  explicit Report(std::vector<std::string> cols = {}) : columns(std::move(cols)) {}
  /// Throws when the row width differs from the column count.
  void add_row(std::vector<ReportCell> row);
  bool empty() const noexcept { return rows.empty(); }
};

/// Floats use printf "%.6g"; non-finite values print as nan/inf in CSV and
/// null in JSON.
std::string format_number(double v);

/// CSV: header line then one line per row. JSON: an array of objects whose
/// keys follow the column order.
std::string render_report(const Report& report, ReportFormat format);

/// Throws on an empty report (before touching the file system) or an
/// unwritable path.
void write_report(const Report& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace sflab
