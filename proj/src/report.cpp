#include "cyclegcn/report.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace cyclegcn {

namespace {

constexpr std::array<std::string_view, 4> kModelOrder{"lr", "svm", "rf", "gcn"};

std::size_t model_rank(const std::string& model) {
  const auto it = std::find(kModelOrder.begin(), kModelOrder.end(), model);
  return static_cast<std::size_t>(it - kModelOrder.begin());
}

bool model_before(const std::string& a, const std::string& b) {
  const auto ra = model_rank(a);
  const auto rb = model_rank(b);
  return ra != rb ? ra < rb : a < b;
}

std::optional<double> metric_of(const ResultRow& row, std::string_view metric) {
  if (metric == "rmse") return row.rmse;
  if (metric == "mse") return row.mse;
  if (metric == "mae") return row.mae;
  return row.mape;
}

std::string cell(double value) { return std::isnan(value) ? "nan" : format_fixed(value, 3); }

}  // namespace

std::vector<ResultRow> parse_results(std::string_view text, std::string_view source) {
  const CsvTable table = parse_csv(text, source);
  std::vector<ResultRow> rows;
  if (table.header.empty()) return rows;
  const std::vector<std::string> expected = [] {
    std::vector<std::string> names;
    std::string_view rest = kResultsHeader;
    while (true) {
      const auto comma = rest.find(',');
      names.emplace_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return names;
  }();
  if (table.header != expected) {
    throw DataError(std::string(source) + ": row 1: unexpected header");
  }
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const std::string where = std::string(source) + ": row " + std::to_string(r + 2);
    const auto number = [&](std::size_t c, bool allow_empty) -> std::optional<double> {
      if (f[c].empty() || f[c] == "nan") {
        if (allow_empty) return std::nullopt;
        throw DataError(where + ": missing " + expected[c]);
      }
      const auto v = parse_double(f[c]);
      if (!v) throw DataError(where + ": invalid " + expected[c] + " '" + f[c] + "'");
      return v;
    };
    ResultRow row;
    try {
      row.level = SparsityLevel::parse(f[0]);
    } catch (const ConfigError&) {
      throw DataError(where + ": invalid level '" + f[0] + "'");
    }
    const auto labelled = parse_integer(f[1]);
    if (!labelled || *labelled < 0) throw DataError(where + ": invalid labelled_count '" + f[1] + "'");
    row.labelled_count = static_cast<Index>(*labelled);
    if (f[2].empty()) throw DataError(where + ": missing model");
    row.model = f[2];
    const auto seed = parse_integer(f[3]);
    if (!seed || *seed < 0) {
      // Seeds above the signed range are still valid.
      if (f[3].empty() || f[3].find_first_not_of("0123456789") != std::string::npos) {
        throw DataError(where + ": invalid seed '" + f[3] + "'");
      }
      row.seed = std::stoull(f[3]);
    } else {
      row.seed = static_cast<std::uint64_t>(*seed);
    }
    if (f[4] != "test" && f[4] != "validation") throw DataError(where + ": invalid split '" + f[4] + "'");
    row.split = f[4];
    row.status = f[11];
    if (row.status.empty()) throw DataError(where + ": missing status");
    const bool ok = row.ok();
    row.rmse = number(5, !ok);
    row.mse = number(6, !ok);
    row.mae = number(7, !ok);
    row.mape = number(8, true);
    if (!f[9].empty()) {
      const auto excluded = parse_integer(f[9]);
      if (!excluded || *excluded < 0) throw DataError(where + ": invalid excluded_zero_targets");
      row.excluded_zero_targets = static_cast<Index>(*excluded);
    } else if (ok) {
      throw DataError(where + ": missing excluded_zero_targets");
    }
    row.wall_ms = number(10, true);
    rows.push_back(std::move(row));
  }
  return rows;
}

bool level_before(const SparsityLevel& a, const SparsityLevel& b) {
  using Kind = SparsityLevel::Kind;
  if (a.kind != b.kind) return a.kind == Kind::fraction;
  return a.kind == Kind::fraction ? a.fraction < b.fraction : a.count > b.count;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

ReportBundle build_report(const std::vector<ResultRow>& rows) {
  std::vector<SparsityLevel> levels;
  std::vector<std::string> models;
  for (const ResultRow& row : rows) {
    if (std::find(levels.begin(), levels.end(), row.level) == levels.end()) levels.push_back(row.level);
    if (std::find(models.begin(), models.end(), row.model) == models.end()) models.push_back(row.model);
  }
  std::sort(levels.begin(), levels.end(), level_before);
  std::sort(models.begin(), models.end(), model_before);

  const auto test_rows = [&](const SparsityLevel& level, const std::string& model) {
    std::vector<const ResultRow*> out;
    for (const ResultRow& row : rows) {
      if (row.split == "test" && row.level == level && row.model == model) out.push_back(&row);
    }
    return out;
  };
  const auto median_metric = [&](const std::vector<const ResultRow*>& selected, std::string_view metric) {
    std::vector<double> values;
    for (const ResultRow* row : selected) {
      if (!row->ok()) continue;
      if (const auto v = metric_of(*row, metric)) values.push_back(*v);
    }
    return median(std::move(values));
  };
  const auto labelled_of = [&](const SparsityLevel& level) {
    std::vector<double> counts;
    for (const ResultRow& row : rows) {
      if (row.level == level) counts.push_back(static_cast<double>(row.labelled_count));
    }
    return median(std::move(counts));
  };

  ReportBundle bundle;
  std::string& table = bundle.sparsity_table;
  table = "| level | labelled | model | seeds | failed | rmse | mae | mape |\n";
  table += "|---|---|---|---|---|---|---|---|\n";
  for (const SparsityLevel& level : levels) {
    for (const std::string& model : models) {
      const auto selected = test_rows(level, model);
      if (selected.empty()) continue;
      const auto failed = std::count_if(selected.begin(), selected.end(),
                                        [](const ResultRow* r) { return !r->ok(); });
      table += "| " + level.to_string() + " | " + format_number(labelled_of(level)) + " | " + model +
               " | " + std::to_string(selected.size()) + " | " + std::to_string(failed) + " | " +
               cell(median_metric(selected, "rmse")) + " | " + cell(median_metric(selected, "mae")) +
               " | " + cell(median_metric(selected, "mape")) + " |\n";
    }
  }

  for (const std::string_view metric : kReportMetrics) {
    std::vector<std::string> header{"level", "labelled_count"};
    header.insert(header.end(), models.begin(), models.end());
    std::string csv = join_csv(header) + "\n";
    for (const SparsityLevel& level : levels) {
      std::vector<std::string> line{level.to_string(), format_number(labelled_of(level))};
      for (const std::string& model : models) {
        const auto selected = test_rows(level, model);
        line.push_back(selected.empty() ? std::string() : format_number(median_metric(selected, metric)));
      }
      csv += join_csv(line) + "\n";
    }
    bundle.series.emplace(std::string(metric), std::move(csv));
  }
  return bundle;
}

void write_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "sparsity_table.md", bundle.sparsity_table);
  for (const auto& [metric, csv] : bundle.series) write_text_file(dir / ("series_" + metric + ".csv"), csv);
}

}  // namespace cyclegcn
