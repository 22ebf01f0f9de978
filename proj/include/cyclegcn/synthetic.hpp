#pragma once

#include "cyclegcn/dataset.hpp"
#include "cyclegcn/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cyclegcn {

enum class GraphFamily { geometric, grid };

std::string_view to_string(GraphFamily family);
GraphFamily parse_graph_family(std::string_view name);

struct SyntheticParams {
  Index n_nodes = 2000;
  GraphFamily family = GraphFamily::geometric;
  /// Expected degree of the random geometric graph.
  double mean_degree = 12.0;
  /// Propagation steps applied to the feature-linear signal.
  int diffusion_depth = 3;
  /// Standard deviation of the lognormal intensity noise.
  double noise_sigma = 0.3;
  /// Weight of the standardized diffused signal in the log-intensity.
  double signal_scale = 0.7;
  /// Median daily count.
  double base_intensity = 40.0;
  int days = 30;
  /// Share of segments that receive count series.
  double labelled_fraction = 0.8;
  /// Per-field probability of a missing feature value.
  double missing_rate = 0.02;

  /// Throws ConfigError.
  void validate() const;
};

/// Generated network with features and count series. Features are rounded
/// to the precision used in the CSV output, so a dataset loaded back from
/// the files matches `to_dataset()`.
struct SyntheticCity {
  SyntheticParams params;
  std::uint64_t seed = 0;
  RoadGraph graph;
  RawFeatures features;
  /// Daily counts per node; empty for unlabelled segments.
  std::vector<std::vector<std::int64_t>> counts;
  /// Poisson mean per node.
  std::vector<double> intensity;

  Dataset to_dataset() const;
};

/// Throws ConfigError when n_nodes < 50.
SyntheticCity generate_synthetic_city(const SyntheticParams& params, std::uint64_t seed);

std::string nodes_csv_text(const SyntheticCity& city);
std::string counts_csv_text(const SyntheticCity& city);

/// Writes nodes.csv, edges.csv and counts.csv; returns their paths.
DatasetPaths write_synthetic_city(const SyntheticCity& city, const std::filesystem::path& dir);

/// Poisson draw; exact inversion for small means, transformed rejection
/// otherwise.
std::int64_t sample_poisson(Rng& rng, double mean);

}  // namespace cyclegcn
