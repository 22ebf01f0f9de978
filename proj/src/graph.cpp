#include "cyclegcn/graph.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cyclegcn {

Index RoadGraph::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw DataError("unknown endpoint " + std::string(id));
  return it->second;
}

std::vector<Index> RoadGraph::degrees() const {
  std::vector<Index> degree(node_ids.size(), 0);
  for (const auto& [i, j] : edges) {
    ++degree[static_cast<std::size_t>(i)];
    ++degree[static_cast<std::size_t>(j)];
  }
  return degree;
}

RoadGraph build_graph(std::vector<std::string> node_ids, const EdgeList& raw_edges) {
  if (node_ids.empty()) throw DataError("graph needs at least one node");
  RoadGraph graph;
  graph.index_.reserve(node_ids.size());
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    if (!graph.index_.emplace(node_ids[i], static_cast<Index>(i)).second) {
      throw DataError("duplicate node id " + node_ids[i]);
    }
  }
  graph.node_ids = std::move(node_ids);
  graph.edge_attribute_names = raw_edges.attribute_names;

  // First occurrence of each unordered pair wins; its attributes are kept.
  std::vector<std::pair<std::pair<Index, Index>, std::size_t>> kept;
  std::set<std::pair<Index, Index>> seen;
  for (std::size_t e = 0; e < raw_edges.edges.size(); ++e) {
    const auto& edge = raw_edges.edges[e];
    const Index a = graph.index_of(edge.from);
    const Index b = graph.index_of(edge.to);
    if (a == b) {
      ++graph.dropped_self_loops;
      continue;
    }
    const auto key = std::minmax(a, b);
    if (!seen.insert(key).second) {
      ++graph.dropped_duplicates;
      continue;
    }
    kept.push_back({key, e});
  }
  std::sort(kept.begin(), kept.end());
  graph.edges.reserve(kept.size());
  graph.edge_attributes.reserve(kept.size());
  for (const auto& [key, e] : kept) {
    graph.edges.push_back(key);
    graph.edge_attributes.push_back(raw_edges.edges[e].attributes);
  }
  return graph;
}

RoadGraph build_graph(std::vector<std::string> node_ids,
                      const std::vector<std::pair<std::string, std::string>>& raw_edges) {
  EdgeList list;
  list.edges.reserve(raw_edges.size());
  for (const auto& [from, to] : raw_edges) list.edges.push_back({from, to, {}});
  return build_graph(std::move(node_ids), list);
}

NormalizedAdjacency normalize(const RoadGraph& graph) {
  return NormalizedAdjacency{normalized_adjacency<double>(graph)};
}

double spectral_radius_estimate(const SparseMatrix<double>& m, int iterations) {
  const Index n = m.rows();
  if (n == 0) return 0.0;
  // Deterministic start vector with no special alignment to any eigenvector.
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = 1.0 + 0.37 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = spmm(m, v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    estimate = norm;
    v = w / norm;
  }
  return estimate;
}

EdgeList read_edge_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t from = table.require_column("from_id");
  const std::size_t to = table.require_column("to_id");
  EdgeList list;
  std::vector<std::size_t> attr_columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c != from && c != to) {
      attr_columns.push_back(c);
      list.attribute_names.push_back(table.header[c]);
    }
  }
  list.edges.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[from].empty() || row[to].empty()) {
      throw DataError(path.string() + ":" + std::to_string(table.lines[r]) + ": empty endpoint");
    }
    RawEdge edge{row[from], row[to], {}};
    for (const auto c : attr_columns) edge.attributes.push_back(row[c]);
    list.edges.push_back(std::move(edge));
  }
  return list;
}

std::string edge_csv_text(const RoadGraph& graph) {
  std::vector<std::string> header{"from_id", "to_id"};
  header.insert(header.end(), graph.edge_attribute_names.begin(), graph.edge_attribute_names.end());
  std::string out = join_csv(header) + "\n";
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    std::vector<std::string> row{graph.node_ids[static_cast<std::size_t>(graph.edges[e].first)],
                                 graph.node_ids[static_cast<std::size_t>(graph.edges[e].second)]};
    const auto& attrs = graph.edge_attributes[e];
    row.insert(row.end(), attrs.begin(), attrs.end());
    out += join_csv(row) + "\n";
  }
  return out;
}

}  // namespace cyclegcn
