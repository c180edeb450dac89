#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dvgnn/data.hpp"
#include "dvgnn/graphs.hpp"
#include "dvgnn/metrics.hpp"
#include "dvgnn/trainer.hpp"

namespace dvgnn {

struct RunConfig {
  TrainConfig train;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  std::size_t p = 60;
  std::size_t horizon = 12;
  double threshold = 0.5;
  std::size_t temporal_kernel = 3;
  std::size_t channels = 3;
  std::string mask = "auto";  // on, off, or auto (on when an adjacency is present)
  bool linear_logsigma = false;
  DecoderMode decoder_mode = DecoderMode::Standardized;
  double edge_train_fraction = 0.8;
};

// Normalized data, chronological windows and the graph seen during training.
struct Prepared {
  TimeSeriesDataset normalized;
  NormStats stats;
  SplitBounds split;
  std::vector<Window> train, val, test;
  Graph predefined;                     // adjacency, or identity without one
  Graph training_graph;                 // predefined minus held-out edges
  std::optional<EdgeSplit> edge_split;  // only with an adjacency
};

Prepared prepare(const TimeSeriesDataset& raw, const RunConfig& cfg);
bool mask_enabled(const RunConfig& cfg, const Prepared& prep);
Model build_model(const Prepared& prep, const RunConfig& cfg);

// Copies every model parameter from source; shapes must match.
void assign_params(Model& model, const ParamStore& source);

struct ForecastEval {
  std::vector<double> rmse_h;  // per horizon, denormalized units
  std::vector<double> mae_h;
  double rmse_all = 0.0;
  std::vector<Tensor> predicted;  // per window, n x horizon, denormalized
  std::vector<Tensor> actual;
};
ForecastEval evaluate_forecast(const Model& model, const Prepared& prep, const std::vector<Window>& windows,
                               bool static_graph);

// Window-mean coupling scores over every p-step window in [begin, end).
Tensor mean_coupling(const Model& model, const Prepared& prep, std::size_t begin, std::size_t end);

// Held-out edges vs sampled negatives with an adjacency, else the whole
// off-diagonal matrix against truth. Returns nothing when neither is available.
std::optional<LinkEvalReport> evaluate_links(const Model& model, const Prepared& prep,
                                             const std::optional<Graph>& truth, double threshold = 0.5);

// One row per test step t, pair (i, j): the last transition of the window ending at t.
struct DynamicGraphRow {
  std::size_t t, i, j;
  double causal, transition;
};
std::vector<DynamicGraphRow> dynamic_graph_rows(const Model& model, const Prepared& prep, std::size_t begin,
                                                std::size_t end);

struct PipelineResult {
  Model model;
  Prepared prep;
  std::vector<EpochLog> log;
  ForecastEval forecast;
  std::optional<LinkEvalReport> links;
};

enum class Stages { GraphOnly, ForecastOnly, Both };

// Trains the requested stages on `model` (created from prep when absent) and evaluates.
PipelineResult run_pipeline(const TimeSeriesDataset& raw, const RunConfig& cfg, const std::optional<Graph>& truth,
                            Stages stages = Stages::Both, std::optional<ParamStore> initial = std::nullopt);

}  // namespace dvgnn
