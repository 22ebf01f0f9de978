#pragma once

#include "cyclegcn/sparse.hpp"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cyclegcn {

/// One row of an edge CSV: endpoint identifiers plus opaque attributes.
struct RawEdge {
  std::string from;
  std::string to;
  std::vector<std::string> attributes;
};

struct EdgeList {
  std::vector<std::string> attribute_names;
  std::vector<RawEdge> edges;
};

/// Road-segment graph. Segments are nodes; edges are undirected connections
/// between segments sharing an intersection.
///
/// Edges are stored once as (i, j) with i < j, sorted. Edge attributes are
/// carried along for round-tripping but do not enter the propagation operator.
struct RoadGraph {
  std::vector<std::string> node_ids;
  std::vector<std::pair<Index, Index>> edges;
  std::vector<std::string> edge_attribute_names;
  std::vector<std::vector<std::string>> edge_attributes;
  std::size_t dropped_duplicates = 0;
  std::size_t dropped_self_loops = 0;

  Index node_count() const { return static_cast<Index>(node_ids.size()); }
  Index edge_count() const { return static_cast<Index>(edges.size()); }
  /// Throws DataError for an unknown identifier.
  Index index_of(std::string_view id) const;
  std::vector<Index> degrees() const;

 private:
  friend RoadGraph build_graph(std::vector<std::string>, const EdgeList&);
  std::unordered_map<std::string, Index> index_;
};

RoadGraph build_graph(std::vector<std::string> node_ids, const EdgeList& raw_edges);
RoadGraph build_graph(std::vector<std::string> node_ids,
                      const std::vector<std::pair<std::string, std::string>>& raw_edges);

/// D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of A + I.
template <typename Scalar = double>
SparseMatrix<Scalar> normalized_adjacency(const RoadGraph& graph) {
  const Index n = graph.node_count();
  const auto degree = graph.degrees();
  std::vector<Scalar> inv_sqrt(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    inv_sqrt[static_cast<std::size_t>(i)] =
        Scalar(1) / std::sqrt(static_cast<Scalar>(degree[static_cast<std::size_t>(i)] + 1));
  }
  using Triplet = typename SparseMatrix<Scalar>::Triplet;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n) + 2 * graph.edges.size());
  for (Index i = 0; i < n; ++i) {
    // Exactly 1/(d+1); the product of two rounded square roots is not.
    triplets.push_back({i, i, Scalar(1) / static_cast<Scalar>(degree[static_cast<std::size_t>(i)] + 1)});
  }
  for (const auto& [i, j] : graph.edges) {
    const Scalar w = inv_sqrt[static_cast<std::size_t>(i)] * inv_sqrt[static_cast<std::size_t>(j)];
    triplets.push_back({i, j, w});
    triplets.push_back({j, i, w});
  }
  return SparseMatrix<Scalar>::from_triplets(n, n, std::move(triplets));
}

/// The constant propagation operator shared by every graph convolution.
struct NormalizedAdjacency {
  SparseMatrix<double> matrix;
};

NormalizedAdjacency normalize(const RoadGraph& graph);

/// Largest-magnitude eigenvalue estimate by power iteration.
double spectral_radius_estimate(const SparseMatrix<double>& m, int iterations = 500);

EdgeList read_edge_csv(const std::filesystem::path& path);
std::string edge_csv_text(const RoadGraph& graph);

}  // namespace cyclegcn
