#pragma once

#include "cyclegcn/graph.hpp"
#include "cyclegcn/random.hpp"

#include <Eigen/Dense>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace testing {

using cyclegcn::Index;

inline std::vector<std::string> numbered_ids(Index n) {
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  return ids;
}

using EdgePairs = std::vector<std::pair<std::string, std::string>>;

/// Erdos-Renyi graph over ids n0..n{n-1}.
inline cyclegcn::RoadGraph random_graph(Index n, double p, cyclegcn::Rng& rng) {
  const auto ids = numbered_ids(n);
  std::vector<std::pair<std::string, std::string>> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.emplace_back(ids[i], ids[j]);
    }
  }
  return cyclegcn::build_graph(ids, edges);
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, cyclegcn::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

inline Eigen::VectorXd random_vector(Index n, cyclegcn::Rng& rng) {
  return random_matrix(n, 1, rng).col(0);
}

/// Fresh empty directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cyclegcn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
