#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvgnn/graphs.hpp"
#include "dvgnn/tensor.hpp"

namespace dvgnn {

// Multivariate series: one T x n matrix per feature. Missing values are NaN
// until repair_missing runs.
struct TimeSeriesDataset {
  std::vector<std::string> node_ids;
  std::vector<Tensor> features;  // each T x n
  std::size_t target_feature = 0;
  double sampling_minutes = 5.0;
  std::optional<Graph> adjacency;

  std::size_t n_nodes() const { return node_ids.size(); }
  std::size_t n_features() const { return features.size(); }
  std::size_t steps() const { return features.empty() ? 0 : features[0].rows(); }
  // n x F feature matrix at step t.
  Tensor step(std::size_t t) const;
  // The pre-defined graph, or the identity when none was supplied.
  Graph predefined_graph() const;
};

TimeSeriesDataset load_dataset(const std::string& manifest_path);
// Writes dataset.ini, one signals CSV per feature and adjacency.csv when present.
// extra_manifest lines are appended verbatim (key = value).
void write_dataset(const TimeSeriesDataset& ds, const std::string& dir,
                   const std::vector<std::string>& extra_manifest = {});

// Header "time,<node ids>", one row per step, empty cell = missing.
Tensor read_signal_csv(const std::string& path, std::vector<std::string>& node_ids);
void write_signal_csv(const std::string& path, const Tensor& values, const std::vector<std::string>& node_ids);
void write_matrix_csv(const std::string& path, const Tensor& m);
Tensor read_matrix_csv(const std::string& path);

// Linear interpolation per node and feature; edge gaps take the nearest value.
TimeSeriesDataset repair_missing(TimeSeriesDataset ds);

// Chronological split boundaries: [0, train_end), [train_end, val_end), [val_end, T).
struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;
};
SplitBounds chronological_split(std::size_t total, double train = 0.7, double val = 0.1);

// Per feature and node: x' = (x - lo) / scale with lo, scale from the train rows.
struct NormStats {
  std::vector<Tensor> lo;     // per feature, 1 x n
  std::vector<Tensor> scale;  // per feature, 1 x n
  double denormalize(double v, std::size_t feature, std::size_t node) const {
    return v * scale[feature](0, node) + lo[feature](0, node);
  }
};
NormStats fit_minmax(const TimeSeriesDataset& ds, std::size_t train_end);
TimeSeriesDataset minmax_normalize(TimeSeriesDataset ds, const NormStats& stats);
TimeSeriesDataset denormalize(TimeSeriesDataset ds, const NormStats& stats);

// Window k covers inputs [start, start + p) and targets [start + p, start + p + horizon).
struct Window {
  std::size_t start = 0;
};
// All stride-1 windows fully inside [begin, end).
std::vector<Window> make_windows(std::size_t begin, std::size_t end, std::size_t p, std::size_t horizon);
std::vector<Tensor> window_inputs(const TimeSeriesDataset& ds, const Window& w, std::size_t p);
// n x horizon target-feature values.
Tensor window_targets(const TimeSeriesDataset& ds, const Window& w, std::size_t p, std::size_t horizon);

// Adds Poisson(lambda) draws to every value in rows [0, train_end).
TimeSeriesDataset inject_poisson(TimeSeriesDataset ds, double lambda, std::uint64_t seed, std::size_t train_end);

struct SimSpec {
  std::size_t n_nodes = 10;
  std::size_t n_true_edges = 15;
  double diag = -0.5;
  double weight_min = 0.3;
  double weight_max = 0.6;
  double dt = 0.1;
  std::size_t steps = 2000;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
  std::optional<Tensor> drift;  // overrides the random draw
  std::optional<Tensor> z0;     // 1 x n; standard normal draw otherwise
};

struct SimResult {
  TimeSeriesDataset dataset;
  Graph truth;  // truth(i, j) = 1 for edge i -> j
  Tensor drift; // F, with dz_j depending on F(j, i) z_i
};

// Random drift with the requested number of off-diagonal edges, redrawn until
// I + F dt is stable.
Tensor random_drift(const SimSpec& spec, Graph& truth, std::uint64_t seed);
double spectral_radius(const Tensor& m);
// Euler-Maruyama: Z_{k+1} = Z_k + F Z_k dt + noise * sqrt(2 dt) * xi_k.
SimResult simulate_sde(const SimSpec& spec);

}  // namespace dvgnn
