#pragma once

#include "cyclegcn/csv.hpp"
#include "cyclegcn/graph.hpp"
#include "cyclegcn/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cyclegcn {

/// Road network, per-node raw features and per-node AADB (empty where the
/// segment has no counts).
struct Dataset {
  RoadGraph graph;
  RawFeatures features;
  std::vector<std::optional<std::int64_t>> aadb;

  std::vector<Index> labelled_nodes() const;
};

struct DatasetPaths {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  std::filesystem::path counts;
};

/// Column typing for the node table. Columns not listed are inferred: a
/// column whose non-empty fields all parse as numbers is continuous.
struct FeatureSchema {
  std::vector<std::string> continuous;
  std::vector<std::string> categorical;
};

/// Node table: `segment_id` plus feature columns, empty field = missing.
/// Counts table: `segment_id,date,count`.
Dataset load_dataset(const DatasetPaths& paths, const FeatureSchema& schema = {});

/// Builds raw feature columns from a parsed node table (id column excluded).
RawFeatures features_from_table(const CsvTable& table, std::size_t id_column,
                                const FeatureSchema& schema, std::string_view source);

/// Daily counts grouped by node index, in file order.
std::vector<std::vector<std::int64_t>> read_counts(const CsvTable& table, const RoadGraph& graph,
                                                   std::string_view source);

}  // namespace cyclegcn
