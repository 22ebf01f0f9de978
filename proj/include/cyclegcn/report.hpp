#pragma once

#include "cyclegcn/sparsity.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cyclegcn {

inline constexpr std::string_view kResultsHeader =
    "level,labelled_count,model,seed,split,rmse,mse,mae,mape,excluded_zero_targets,wall_ms,status";

/// One parsed row of results.csv.
struct ResultRow {
  SparsityLevel level;
  Index labelled_count = 0;
  std::string model;
  std::uint64_t seed = 0;
  std::string split;
  std::optional<double> rmse;
  std::optional<double> mse;
  std::optional<double> mae;
  std::optional<double> mape;
  std::optional<Index> excluded_zero_targets;
  std::optional<double> wall_ms;
  std::string status;

  bool ok() const { return status == "ok"; }
};

/// Throws DataError naming the 1-based row (header = row 1) on malformed
/// input. Empty text yields no rows.
std::vector<ResultRow> parse_results(std::string_view text, std::string_view source = "results.csv");

/// Orders levels from least to most sparse: fractions ascending, then
/// retained counts descending.
bool level_before(const SparsityLevel& a, const SparsityLevel& b);

inline constexpr std::array<std::string_view, 4> kReportMetrics{"rmse", "mse", "mae", "mape"};

struct ReportBundle {
  /// Markdown: one row per (level, model) with median test metrics over
  /// successful seeds.
  std::string sparsity_table;
  /// Per metric: CSV with one row per level and one column per model.
  std::map<std::string, std::string> series;
};

ReportBundle build_report(const std::vector<ResultRow>& rows);

/// Writes sparsity_table.md and series_<metric>.csv.
void write_report(const ReportBundle& bundle, const std::filesystem::path& dir);

/// Median of the values; NaN when empty.
double median(std::vector<double> values);

}  // namespace cyclegcn
