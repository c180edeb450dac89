#include "dvgnn/graphs.hpp"

#include <algorithm>
#include <cmath>

#include "dvgnn/csv.hpp"
#include "dvgnn/errors.hpp"
#include "dvgnn/random.hpp"

namespace dvgnn {

Graph::Graph(Tensor adjacency) : adj_(std::move(adjacency)) {
  if (adj_.rank() != 2 || adj_.rows() != adj_.cols())
    throw DimensionError("graph adjacency must be square, got " + shape_str(adj_.shape()));
  n_ = adj_.rows();
  for (double v : adj_.values())
    if (!std::isfinite(v) || v < 0.0) throw DataError("graph adjacency entries must be finite and >= 0");
}

std::size_t Graph::edge_count() const {
  std::size_t m = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if (i != j && adj_(i, j) > 0.0) ++m;
  return m;
}

Tensor normalize_laplacian(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw DimensionError("normalize_laplacian: " + shape_str(a.shape()));
  std::size_t n = a.rows();
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    dinv[i] = 1.0 / std::sqrt(d);
  }
  Tensor l = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) l(i, j) = dinv[i] * (a(i, j) + (i == j ? 1.0 : 0.0)) * dinv[j];
  return l;
}

Graph threshold_edges(const Graph& g, double tau) {
  if (tau < 0.0) throw ContractError("threshold_edges: tau must be >= 0");
  Tensor a = g.adjacency();
  for (double& v : a.values())
    if (v < tau) v = 0.0;
  return Graph(std::move(a));
}

EdgeSplit split_edges(const Graph& g, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ContractError("split_edges: train fraction must be in (0, 1]");
  std::vector<Edge> edges, non_edges;
  std::size_t n = g.n_nodes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      (g.connected(i, j) ? edges : non_edges).emplace_back(i, j);
    }
  if (edges.empty()) throw ContractError("split_edges: graph has no edges");

  Rng rng(seed);
  std::shuffle(edges.begin(), edges.end(), rng.engine());
  auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * edges.size() - 1e-9));
  n_train = std::min(n_train, edges.size());

  EdgeSplit s;
  s.train_edges.assign(edges.begin(), edges.begin() + n_train);
  s.held_out_edges.assign(edges.begin() + n_train, edges.end());
  if (s.held_out_edges.size() > non_edges.size())
    throw ContractError("split_edges: not enough non-edges for negative sampling");
  std::shuffle(non_edges.begin(), non_edges.end(), rng.engine());
  s.negative_samples.assign(non_edges.begin(), non_edges.begin() + s.held_out_edges.size());
  return s;
}

Graph remove_edges(const Graph& g, const std::vector<Edge>& edges) {
  Tensor a = g.adjacency();
  for (auto [i, j] : edges) a(i, j) = 0.0;
  return Graph(std::move(a));
}

Tensor mask_pattern(const Graph& mask) {
  Tensor m = mask.adjacency();
  for (double& v : m.values()) v = v > 0.0 ? 1.0 : 0.0;
  return m;
}

Tensor apply_mask(const Tensor& sigma, const Graph& mask) {
  if (sigma.shape() != mask.adjacency().shape())
    throw DimensionError("apply_mask: " + shape_str(sigma.shape()) + " vs " +
                         shape_str(mask.adjacency().shape()));
  Tensor out = sigma;
  for (std::size_t k = 0; k < out.size(); ++k)
    if (!(mask.adjacency()[k] > 0.0)) out[k] = 0.0;
  return out;
}

Graph load_adjacency_csv(const std::string& path) {
  auto lines = csv::read_lines(path);
  while (!lines.empty() && csv::trim(lines.back()).empty()) lines.pop_back();
  std::size_t n = lines.size();
  if (n == 0) throw ParseError(path, 1, "empty adjacency file");
  Tensor a = Tensor::matrix(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    auto cells = csv::split(lines[r]);
    if (cells.size() != n)
      throw ParseError(path, r + 1, "expected " + std::to_string(n) + " columns, got " +
                                        std::to_string(cells.size()));
    for (std::size_t c = 0; c < n; ++c) {
      double v = csv::parse_double(cells[c], path, r + 1);
      if (v < 0.0) throw ParseError(path, r + 1, "negative adjacency weight");
      a(r, c) = v;
    }
  }
  return Graph(std::move(a));
}

}  // namespace dvgnn
