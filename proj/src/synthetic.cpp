#include "cyclegcn/synthetic.hpp"

#include "cyclegcn/csv.hpp"
#include "cyclegcn/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace cyclegcn {

namespace {

constexpr std::array<std::string_view, 5> kRoadTypes{"primary", "secondary", "residential",
                                                     "cycleway", "path"};
constexpr std::array<double, 5> kRoadTypeShare{0.15, 0.2, 0.45, 0.1, 0.1};
constexpr std::array<double, 5> kRoadTypeEffect{-0.2, 0.0, 0.1, 0.9, 0.5};

constexpr std::array<std::string_view, 4> kInfrastructure{"none", "painted_lane",
                                                          "protected_lane", "shared_path"};
constexpr std::array<double, 4> kInfrastructureShare{0.5, 0.25, 0.15, 0.1};
constexpr std::array<double, 4> kInfrastructureEffect{-0.3, 0.3, 0.7, 0.4};

constexpr std::array<double, 5> kSpeedLimits{30, 40, 50, 60, 70};

template <std::size_t N>
std::size_t pick(Rng& rng, const std::array<double, N>& shares) {
  double u = rng.uniform();
  for (std::size_t k = 0; k + 1 < N; ++k) {
    if (u < shares[k]) return k;
    u -= shares[k];
  }
  return N - 1;
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

std::string node_id(Index i, Index n) {
  const int width = static_cast<int>(std::to_string(n - 1).size());
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "seg%0*lld", width, static_cast<long long>(i));
  return buffer;
}

// Non-leap calendar date for a 0-based day offset from 1 January.
std::string calendar_date(int offset) {
  static constexpr std::array<int, 12> kMonthDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int month = 0;
  while (offset >= kMonthDays[static_cast<std::size_t>(month)]) {
    offset -= kMonthDays[static_cast<std::size_t>(month)];
    ++month;
  }
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "2023-%02d-%02d", month + 1, offset + 1);
  return buffer;
}

std::vector<std::pair<Index, Index>> geometric_edges(const std::vector<double>& xs,
                                                     const std::vector<double>& ys, double radius) {
  const auto n = static_cast<Index>(xs.size());
  const int cells = std::max(1, static_cast<int>(std::floor(1.0 / radius)));
  const auto cell_of = [&](double v) { return std::min(cells - 1, static_cast<int>(v * cells)); };
  std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(cells * cells));
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(cell_of(ys[i]) * cells + cell_of(xs[i]));
    buckets[k].push_back(i);
  }
  std::vector<std::pair<Index, Index>> edges;
  const double r2 = radius * radius;
  for (Index i = 0; i < n; ++i) {
    const int cx = cell_of(xs[i]);
    const int cy = cell_of(ys[i]);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = cx + dx;
        const int ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= cells || ny >= cells) continue;
        for (const Index j : buckets[static_cast<std::size_t>(ny * cells + nx)]) {
          if (j <= i) continue;
          const double ddx = xs[i] - xs[j];
          const double ddy = ys[i] - ys[j];
          if (ddx * ddx + ddy * ddy <= r2) edges.emplace_back(i, j);
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

std::vector<std::pair<Index, Index>> grid_edges(Index n) {
  const auto side = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i) {
    if ((i + 1) % side != 0 && i + 1 < n) edges.emplace_back(i, i + 1);
    if (i + side < n) edges.emplace_back(i, i + side);
  }
  return edges;
}

}  // namespace

std::string_view to_string(GraphFamily family) {
  return family == GraphFamily::grid ? "grid" : "geometric";
}

GraphFamily parse_graph_family(std::string_view name) {
  if (name == "geometric") return GraphFamily::geometric;
  if (name == "grid") return GraphFamily::grid;
  throw ConfigError("unknown graph family '" + std::string(name) + "' (expected geometric or grid)");
}

void SyntheticParams::validate() const {
  if (n_nodes < 50) throw ConfigError("synthetic n_nodes must be at least 50, got " + std::to_string(n_nodes));
  if (!(mean_degree > 0.0)) throw ConfigError("mean_degree must be positive");
  if (diffusion_depth < 0) throw ConfigError("diffusion_depth must be non-negative");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(signal_scale >= 0.0)) throw ConfigError("signal_scale must be non-negative");
  if (!(base_intensity > 0.0)) throw ConfigError("base_intensity must be positive");
  if (days < 1 || days > 365) throw ConfigError("days must lie in [1, 365]");
  if (!(labelled_fraction > 0.0 && labelled_fraction <= 1.0)) {
    throw ConfigError("labelled_fraction must lie in (0, 1]");
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must lie in [0, 1)");
}

std::int64_t sample_poisson(Rng& rng, double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("poisson mean must be finite and >= 0");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double product = rng.uniform();
    while (product > limit) {
      ++k;
      product *= rng.uniform();
    }
    return k;
  }
  // Hormann's PTRS.
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  while (true) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::int64_t>(k);
    }
  }
}

SyntheticCity generate_synthetic_city(const SyntheticParams& params, std::uint64_t seed) {
  params.validate();
  const Index n = params.n_nodes;
  const auto un = static_cast<std::size_t>(n);
  SyntheticCity city;
  city.params = params;
  city.seed = seed;

  std::vector<std::pair<Index, Index>> edges;
  if (params.family == GraphFamily::geometric) {
    Rng rng(derive_seed(seed, 1));
    std::vector<double> xs(un);
    std::vector<double> ys(un);
    for (std::size_t i = 0; i < un; ++i) {
      xs[i] = rng.uniform();
      ys[i] = rng.uniform();
    }
    const double radius = std::sqrt(params.mean_degree / (std::numbers::pi * static_cast<double>(n)));
    edges = geometric_edges(xs, ys, radius);
  } else {
    edges = grid_edges(n);
  }
  std::vector<std::string> ids;
  ids.reserve(un);
  for (Index i = 0; i < n; ++i) ids.push_back(node_id(i, n));
  EdgeList list;
  for (const auto& [a, b] : edges) list.edges.push_back({ids[static_cast<std::size_t>(a)], ids[static_cast<std::size_t>(b)], {}});
  city.graph = build_graph(ids, list);

  // Features and their contribution to the latent signal.
  Rng feature_rng(derive_seed(seed, 2));
  ContinuousColumn length{"length_m", {}};
  ContinuousColumn slope{"slope_pct", {}};
  ContinuousColumn speed{"speed_kmh", {}};
  CategoricalColumn road{"road_type", {}};
  CategoricalColumn infra{"infrastructure", {}};
  Eigen::VectorXd signal(n);
  for (std::size_t i = 0; i < un; ++i) {
    const double len = round_to(std::exp(feature_rng.normal(std::log(150.0), 0.5)), 1);
    const double slp = round_to(std::abs(feature_rng.normal(0.0, 2.5)), 2);
    const std::size_t road_k = pick(feature_rng, kRoadTypeShare);
    const std::size_t infra_k = pick(feature_rng, kInfrastructureShare);
    const double spd = road_k >= 3 ? 30.0 : kSpeedLimits[feature_rng.index(kSpeedLimits.size())];
    signal(static_cast<Index>(i)) = kRoadTypeEffect[road_k] + kInfrastructureEffect[infra_k] -
                                    0.25 * slp + 0.3 * std::log(len / 150.0) -
                                    0.015 * (spd - 45.0);
    const auto missing = [&] { return feature_rng.bernoulli(params.missing_rate); };
    length.values.push_back(missing() ? std::nullopt : std::optional<double>(len));
    slope.values.push_back(missing() ? std::nullopt : std::optional<double>(slp));
    speed.values.push_back(missing() ? std::nullopt : std::optional<double>(spd));
    road.values.emplace_back(std::string(kRoadTypes[road_k]));
    infra.values.push_back(missing() ? std::nullopt
                                     : std::optional<std::string>(std::string(kInfrastructure[infra_k])));
  }
  city.features.continuous = {std::move(length), std::move(slope), std::move(speed)};
  city.features.categorical = {std::move(road), std::move(infra)};

  // Diffuse, standardize, clip, add lognormal noise. Isolated and low-degree
  // segments keep most of their raw signal and would otherwise dominate the tail.
  const SparseMatrix<double> adjacency = normalized_adjacency<double>(city.graph);
  Eigen::VectorXd diffused = signal;
  for (int step = 0; step < params.diffusion_depth; ++step) diffused = spmm(adjacency, diffused);
  const double mean = diffused.mean();
  const double sd = std::sqrt((diffused.array() - mean).square().mean());
  const Eigen::VectorXd z = sd > 0.0 ? Eigen::VectorXd((diffused.array() - mean) / sd)
                                     : Eigen::VectorXd::Zero(n);
  Rng noise_rng(derive_seed(seed, 3));
  Rng label_rng(derive_seed(seed, 4));
  Rng count_rng(derive_seed(seed, 5));
  city.intensity.resize(un);
  city.counts.assign(un, {});
  for (std::size_t i = 0; i < un; ++i) {
    const double log_mu = std::log(params.base_intensity) +
                          params.signal_scale * std::clamp(z(static_cast<Index>(i)), -3.0, 3.0) +
                          noise_rng.normal(0.0, params.noise_sigma);
    city.intensity[i] = std::exp(log_mu);
    if (!label_rng.bernoulli(params.labelled_fraction)) continue;
    auto& series = city.counts[i];
    series.reserve(static_cast<std::size_t>(params.days));
    for (int d = 0; d < params.days; ++d) series.push_back(sample_poisson(count_rng, city.intensity[i]));
  }
  return city;
}

Dataset SyntheticCity::to_dataset() const {
  Dataset data;
  data.graph = graph;
  data.features = features;
  data.aadb.reserve(counts.size());
  for (const auto& series : counts) data.aadb.push_back(compute_aadb(series));
  return data;
}

std::string nodes_csv_text(const SyntheticCity& city) {
  std::vector<std::string> header{"segment_id"};
  for (const auto& c : city.features.continuous) header.push_back(c.name);
  for (const auto& c : city.features.categorical) header.push_back(c.name);
  std::string out = join_csv(header) + "\n";
  for (std::size_t i = 0; i < city.graph.node_ids.size(); ++i) {
    std::vector<std::string> row{city.graph.node_ids[i]};
    for (const auto& c : city.features.continuous) {
      row.push_back(c.values[i] ? format_number(*c.values[i]) : std::string());
    }
    for (const auto& c : city.features.categorical) row.push_back(c.values[i].value_or(""));
    out += join_csv(row) + "\n";
  }
  return out;
}

std::string counts_csv_text(const SyntheticCity& city) {
  std::string out = "segment_id,date,count\n";
  for (std::size_t i = 0; i < city.counts.size(); ++i) {
    for (std::size_t d = 0; d < city.counts[i].size(); ++d) {
      out += join_csv({city.graph.node_ids[i], calendar_date(static_cast<int>(d)),
                       std::to_string(city.counts[i][d])});
      out += '\n';
    }
  }
  return out;
}

DatasetPaths write_synthetic_city(const SyntheticCity& city, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  DatasetPaths paths{dir / "nodes.csv", dir / "edges.csv", dir / "counts.csv"};
  write_text_file(paths.nodes, nodes_csv_text(city));
  write_text_file(paths.edges, edge_csv_text(city.graph));
  write_text_file(paths.counts, counts_csv_text(city));
  return paths;
}

}  // namespace cyclegcn
