#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dvgnn/tensor.hpp"

namespace dvgnn {

// Directed weighted graph held as a dense n x n adjacency; entry (i, j) is the
// weight of edge i -> j. Entries are finite and nonnegative.
class Graph {
 public:
  Graph() = default;
  explicit Graph(Tensor adjacency);

  static Graph empty(std::size_t n) { return Graph(Tensor::matrix(n, n)); }
  static Graph identity(std::size_t n) { return Graph(Tensor::identity(n)); }

  std::size_t n_nodes() const { return n_; }
  const Tensor& adjacency() const { return adj_; }
  bool connected(std::size_t i, std::size_t j) const { return adj_(i, j) > 0.0; }
  // Off-diagonal entries with positive weight.
  std::size_t edge_count() const;

 private:
  std::size_t n_ = 0;
  Tensor adj_;
};

using Edge = std::pair<std::size_t, std::size_t>;

struct EdgeSplit {
  std::vector<Edge> train_edges;
  std::vector<Edge> held_out_edges;
  std::vector<Edge> negative_samples;
};

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I (row sums).
Tensor normalize_laplacian(const Tensor& adjacency);
inline Tensor normalize_laplacian(const Graph& g) { return normalize_laplacian(g.adjacency()); }

Graph threshold_edges(const Graph& g, double tau);

// Shuffles the off-diagonal edges and keeps ceil(fraction * m) for training.
// Negatives are non-edges drawn without replacement, as many as held out.
EdgeSplit split_edges(const Graph& g, double train_fraction, std::uint64_t seed);

// Copy of g with the listed edges set to 0.
Graph remove_edges(const Graph& g, const std::vector<Edge>& edges);

// 0/1 connectivity pattern of the graph.
Tensor mask_pattern(const Graph& mask);
Tensor apply_mask(const Tensor& sigma, const Graph& mask);

// n rows of n comma-separated nonnegative decimals, no header.
Graph load_adjacency_csv(const std::string& path);

}  // namespace dvgnn
