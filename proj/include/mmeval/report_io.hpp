#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "mmeval/analysis.hpp"

namespace mmeval {

enum class ReportFormat { All, Json, Csv, Markdown };
std::optional<ReportFormat> report_format_from_name(std::string_view name);  // json/csv/md

/// Full report as one JSON document. Deterministic: no timestamps, stable
/// field order, so identical inputs yield identical bytes.
std::string report_to_json_text(const AnalysisReport& report);

/// Human-readable digest with one table per section.
std::string report_to_markdown(const AnalysisReport& report);

/// Flat CSV exports, keyed by their relative path under the output directory
/// (tables/amce.csv, plotdata/radar.csv, ...).
std::map<std::string, std::string> report_csv_files(const AnalysisReport& report);

/// Writes report.json / report.md / CSVs into out_dir according to format
/// (All writes everything). Creates directories as needed; throws IoError.
void write_report(const AnalysisReport& report, const std::filesystem::path& out_dir,
                  ReportFormat format);

}  // namespace mmeval
