#include "sflab/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace sflab {

ReportFormat parse_format(std::string_view name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw Error("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

std::string_view format_name(ReportFormat f) { return f == ReportFormat::kCsv ? "csv" : "json"; }

void Report::add_row(std::vector<ReportCell> row) {
  if (row.size() != columns.size()) {
    throw Error("report row has " + std::to_string(row.size()) + " cells, table has " +
                std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_cell(const ReportCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return csv_field(*s);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return format_number(std::get<double>(cell));
}

std::string json_cell(const ReportCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return nlohmann::json(*s).dump();
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  const double v = std::get<double>(cell);
  return std::isfinite(v) ? format_number(v) : "null";
}

}  // namespace

std::string render_report(const Report& report, ReportFormat format) {
  if (report.columns.empty()) throw Error("report has no columns");
  std::string out;
  if (format == ReportFormat::kCsv) {
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      if (c) out += ',';
      out += csv_field(report.columns[c]);
    }
    out += '\n';
    for (const auto& row : report.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ',';
        out += csv_cell(row[c]);
      }
      out += '\n';
    }
    return out;
  }
  out += "[\n";
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    out += "  {";
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      if (c) out += ", ";
      out += nlohmann::json(report.columns[c]).dump() + ": " + json_cell(report.rows[r][c]);
    }
    out += r + 1 < report.rows.size() ? "},\n" : "}\n";
  }
  out += "]\n";
  return out;
}

void write_report(const Report& report, const std::filesystem::path& path, ReportFormat format) {
  if (report.empty()) throw Error("refusing to write an empty report to " + path.string());
  const std::string text = render_report(report, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write report to " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace sflab
