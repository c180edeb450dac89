#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/data.hpp"
#include "dvgnn/decoder.hpp"
#include "dvgnn/encoder.hpp"
#include "dvgnn/forecaster.hpp"

namespace dvgnn {

struct TrainConfig {
  double lr_graph = 1e-3;
  double lr_forecast = 5e-4;
  std::size_t epochs_graph = 6;
  std::size_t epochs_forecast = 10;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  bool mask_enabled = false;
  double reg_weight = 1e-3;
  double grad_clip = 5.0;
  // Interleave a graph step and a forecast step on every batch.
  bool joint = false;
  // Replace per-step transition graphs by the pre-defined graph.
  bool static_graph = false;
};

struct OptimizerState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

// Bias-corrected adaptive-moment update of the named parameters.
void adam_step(ParamStore& store, OptimizerState& state, std::span<const std::string> names, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Rescales the named gradients so their global norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(ParamStore& store, std::span<const std::string> names, double max_norm);

// Everything needed to run the model on a normalized dataset.
struct Model {
  EncoderConfig enc;
  DecoderConfig dec;
  ForecastConfig fc;
  std::size_t p = 0;
  ParamStore params;
  Tensor encoder_laplacian;          // from the (training) pre-defined graph
  Tensor static_laplacian;           // used by the static-graph ablation
  std::optional<Tensor> mask;        // 0/1 pattern when masking is on

  // Encoder and decoder parameters (stage 1), forecaster parameters (stage 2).
  std::vector<std::string> graph_params() const;
  std::vector<std::string> forecast_params() const { return params.names_with_prefix("fc."); }
};

// Creates encoder, decoder and forecaster parameters. Sigma starts at zero.
Model make_model(const EncoderConfig& enc, const DecoderConfig& dec, const ForecastConfig& fc, std::size_t p,
                 const Graph& predefined, bool mask_enabled, std::uint64_t seed);

struct EpochLog {
  std::string stage;  // "graph" or "forecast"
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_rmse = 0.0;  // forecast stage only; NaN otherwise
};

// Negated ELBO of one window and its gradients; noise holds p draws of n x H2.
struct WindowGraphLoss {
  double loss = 0.0;
  GradientMap grads;
  std::vector<double> min_sigma;  // per node, over steps and latent dims
};
WindowGraphLoss graph_window_loss(const Model& model, std::span<const Tensor> window, std::span<const Tensor> noise);

// Forecaster input steps and per-step Laplacians for one window of p steps.
std::vector<Tensor> forecast_inputs(std::span<const Tensor> window);
std::vector<Tensor> window_laplacians(const Model& model, std::span<const Tensor> window, bool static_graph);

// Clamp |Sigma_ij| to 0.99 * min_sigma_i * min_sigma_j and zero masked entries.
void project_sigma(Model& model, std::span<const double> min_sigma);

class Trainer {
 public:
  Trainer(Model& model, const TimeSeriesDataset& normalized, const NormStats& stats, std::size_t horizon,
          TrainConfig cfg);

  std::vector<EpochLog> train_graph_stage(std::span<const Window> train);
  std::vector<EpochLog> train_forecast_stage(std::span<const Window> train, std::span<const Window> val);
  std::vector<EpochLog> train_joint(std::span<const Window> train, std::span<const Window> val);

  // Denormalized RMSE over all horizons and nodes.
  double evaluate_rmse(std::span<const Window> windows);

 private:
  double graph_batch(std::span<const Window> batch, std::size_t epoch, std::size_t index);
  double forecast_batch(std::span<const Window> batch, std::span<const std::vector<Tensor>> laplacians,
                        std::size_t epoch, std::size_t index);
  std::vector<std::vector<Tensor>> laplacians_for(std::span<const Window> windows);

  Model& model_;
  const TimeSeriesDataset& data_;
  const NormStats& stats_;
  std::size_t horizon_;
  TrainConfig cfg_;
  OptimizerState graph_opt_, forecast_opt_;
  Rng shuffle_rng_, noise_rng_;
};

}  // namespace dvgnn
