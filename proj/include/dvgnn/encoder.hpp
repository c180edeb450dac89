#pragma once

#include <string>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/random.hpp"
#include "dvgnn/tensor.hpp"

namespace dvgnn {

struct EncoderConfig {
  std::size_t features = 1;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  // Drop the sigmoid on the log-sigma head.
  bool linear_logsigma = false;
};

namespace enc_names {
inline const std::string W0 = "enc.W0";
inline const std::string W1_mu = "enc.W1_mu";
inline const std::string W1_sigma = "enc.W1_sigma";
}  // namespace enc_names

// Glorot-uniform weights: U(-r, r), r = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
void init_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng);

// Gaussian posterior over node latents at one step; n x H2 each.
struct LatentDistribution {
  Tensor mu;
  Tensor log_sigma;
};

struct LatentSample {
  Tensor z;
  Tensor noise;
};

struct LatentVars {
  Var mu;
  Var log_sigma;
};

// mu = sigmoid(L relu(L X W0) W1_mu); log_sigma likewise with W1_sigma.
LatentVars encode(Tape& tape, const ParamStore& store, const Tensor& x, Var laplacian,
                  const EncoderConfig& cfg);
LatentDistribution encode(const Tensor& x, const Tensor& laplacian, const ParamStore& store,
                          const EncoderConfig& cfg);

// z = mu + exp(log_sigma) * noise. The noise is a constant on the tape.
Var reparameterize(const LatentVars& dist, const Tensor& noise);
LatentSample reparameterize(const LatentDistribution& dist, const Tensor& noise);

// Throws DataError naming the first non-finite (node, feature) entry.
void check_features(const Tensor& x);

}  // namespace dvgnn
