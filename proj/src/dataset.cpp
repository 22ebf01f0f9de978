#include "cyclegcn/dataset.hpp"

#include "cyclegcn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cyclegcn {

std::vector<Index> Dataset::labelled_nodes() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < aadb.size(); ++i) {
    if (aadb[i]) out.push_back(static_cast<Index>(i));
  }
  return out;
}

namespace {

bool listed(const std::vector<std::string>& names, const std::string& name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::string location(std::string_view source, const CsvTable& table, std::size_t row) {
  return std::string(source) + ":" + std::to_string(table.lines[row]);
}

}  // namespace

RawFeatures features_from_table(const CsvTable& table, std::size_t id_column,
                                const FeatureSchema& schema, std::string_view source) {
  for (const auto* names : {&schema.continuous, &schema.categorical}) {
    for (const auto& name : *names) {
      if (!table.column(name)) {
        throw DataError(std::string(source) + ": missing required column " + name);
      }
    }
  }
  RawFeatures raw;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == id_column) continue;
    const std::string& name = table.header[c];
    bool numeric = !listed(schema.categorical, name);
    if (numeric && !listed(schema.continuous, name)) {
      numeric = std::all_of(table.rows.begin(), table.rows.end(), [&](const auto& row) {
        return row[c].empty() || parse_double(row[c]).has_value();
      });
    }
    if (numeric) {
      ContinuousColumn column{name, {}};
      column.values.reserve(table.rows.size());
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& field = table.rows[r][c];
        if (field.empty()) {
          column.values.emplace_back();
          continue;
        }
        const auto value = parse_double(field);
        if (!value || !std::isfinite(*value)) {
          throw DataError(location(source, table, r) + ": column " + name +
                          " expects a number, got '" + field + "'");
        }
        column.values.emplace_back(*value);
      }
      raw.continuous.push_back(std::move(column));
    } else {
      CategoricalColumn column{name, {}};
      column.values.reserve(table.rows.size());
      for (const auto& row : table.rows) {
        if (row[c].empty()) column.values.emplace_back();
        else column.values.emplace_back(row[c]);
      }
      raw.categorical.push_back(std::move(column));
    }
  }
  return raw;
}

std::vector<std::vector<std::int64_t>> read_counts(const CsvTable& table, const RoadGraph& graph,
                                                   std::string_view source) {
  const std::size_t id = table.require_column("segment_id");
  table.require_column("date");
  const std::size_t count = table.require_column("count");
  std::vector<std::vector<std::int64_t>> series(graph.node_count());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    Index node = 0;
    try {
      node = graph.index_of(row[id]);
    } catch (const DataError&) {
      throw DataError(location(source, table, r) + ": unknown segment_id " + row[id]);
    }
    const auto value = parse_integer(row[count]);
    if (!value) {
      throw DataError(location(source, table, r) + ": count must be an integer, got '" +
                      row[count] + "'");
    }
    if (*value < 0) throw DataError(location(source, table, r) + ": negative count");
    series[static_cast<std::size_t>(node)].push_back(*value);
  }
  return series;
}

Dataset load_dataset(const DatasetPaths& paths, const FeatureSchema& schema) {
  const CsvTable nodes = read_csv(paths.nodes);
  const std::size_t id = nodes.require_column("segment_id");
  std::vector<std::string> ids;
  ids.reserve(nodes.rows.size());
  for (const auto& row : nodes.rows) ids.push_back(row[id]);

  Dataset data;
  data.graph = build_graph(std::move(ids), read_edge_csv(paths.edges));
  data.features = features_from_table(nodes, id, schema, paths.nodes.string());
  const auto series = read_counts(read_csv(paths.counts), data.graph, paths.counts.string());
  data.aadb.reserve(series.size());
  for (const auto& s : series) data.aadb.push_back(compute_aadb(s));
  return data;
}

}  // namespace cyclegcn
