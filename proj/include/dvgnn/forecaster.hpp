#pragma once

#include <span>
#include <string>
#include <vector>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/random.hpp"
#include "dvgnn/tensor.hpp"

namespace dvgnn {

struct ForecastConfig {
  std::size_t nodes = 0;
  std::size_t features = 1;
  std::size_t steps = 0;        // T_r = p - 1
  std::size_t channels = 3;     // C
  std::size_t kernel = 3;       // temporal convolution width (odd)
  std::size_t horizon = 12;     // T'
  std::size_t target_feature = 0;
};

namespace fc_names {
inline const std::string gcn_a = "fc.gcn_a";
inline const std::string gcn_b = "fc.gcn_b";
inline const std::string att_Ve = "fc.att_Ve";
inline const std::string att_be = "fc.att_be";
inline const std::string att_U1 = "fc.att_U1";
inline const std::string att_U2 = "fc.att_U2";
inline const std::string att_U3 = "fc.att_U3";
inline const std::string conv_b = "fc.conv_b";
inline const std::string out_w = "fc.out_w";
inline const std::string out_b = "fc.out_b";
inline const std::string res_w = "fc.res_w";
inline const std::string res_b = "fc.res_b";
std::string conv_w(std::size_t k);
}  // namespace fc_names

// Glorot weights for the GCN, attention and convolution; zero output
// projection; residual head initialised to repeat the last observed value.
void init_forecaster(ParamStore& store, const ForecastConfig& cfg, Rng& rng);

// h_t = relu(L_t relu(L_t X_t W_a) W_b) for each step, weights shared.
std::vector<Var> dynamic_gcn_forward(Tape& tape, const ParamStore& store, std::span<const Tensor> window,
                                     std::span<const Tensor> laplacians);

struct AttentionResult {
  Var weights;             // T_r x T_r, rows sum to 1
  std::vector<Var> out;    // T_r of n x C
};

// E = Ve sigmoid((h^T U1) U2 (U3 h) + be); E' = row softmax(E); out_t = sum_s E'_ts h_s.
AttentionResult temporal_attention(Tape& tape, const ParamStore& store, std::span<const Var> h);

// Zero-padded temporal convolution along the steps, followed by ReLU.
std::vector<Var> temporal_conv(Tape& tape, const ParamStore& store, std::span<const Var> x, std::size_t kernel);

// y(i, :) = x(i, :) W_i where row i of w stores W_i (steps x outputs) row-major.
Var per_node_projection(Var x, Var w);

// n x T' forecast: projection of the convolved attention output plus a per-node
// linear head (own weights and bias per node) on the raw target-feature window.
Var predict(Tape& tape, const ParamStore& store, std::span<const Tensor> window,
            std::span<const Tensor> laplacians, const ForecastConfig& cfg);
Tensor predict(std::span<const Tensor> window, std::span<const Tensor> laplacians, const ParamStore& store,
               const ForecastConfig& cfg);

// Mean of squared differences.
Var l2_loss(Var pred, const Tensor& target);
double l2_loss(const Tensor& pred, const Tensor& target);

}  // namespace dvgnn
