#include "dvgnn/encoder.hpp"

#include <cmath>

#include "dvgnn/errors.hpp"

namespace dvgnn {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::matrix(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-r, r);
  return w;
}

void init_encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
  if (cfg.features == 0 || cfg.hidden1 == 0 || cfg.hidden2 == 0)
    throw ContractError("encoder sizes must be positive");
  store.add(enc_names::W0, glorot_uniform(cfg.features, cfg.hidden1, rng));
  store.add(enc_names::W1_mu, glorot_uniform(cfg.hidden1, cfg.hidden2, rng));
  store.add(enc_names::W1_sigma, glorot_uniform(cfg.hidden1, cfg.hidden2, rng));
}

void check_features(const Tensor& x) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t f = 0; f < x.cols(); ++f)
      if (!std::isfinite(x(i, f)))
        throw DataError("non-finite feature at node " + std::to_string(i) + ", feature " + std::to_string(f));
}

LatentVars encode(Tape& tape, const ParamStore& store, const Tensor& x, Var laplacian,
                  const EncoderConfig& cfg) {
  check_features(x);
  Var w0 = tape.parameter(store, enc_names::W0);
  Var wm = tape.parameter(store, enc_names::W1_mu);
  Var ws = tape.parameter(store, enc_names::W1_sigma);
  Var h = ops::relu(ops::matmul(laplacian, ops::matmul(tape.constant(x), w0)));
  Var lh = ops::matmul(laplacian, h);
  Var mu = ops::sigmoid(ops::matmul(lh, wm));
  Var pre = ops::matmul(lh, ws);
  Var ls = cfg.linear_logsigma ? pre : ops::sigmoid(pre);
  return {mu, ls};
}

LatentDistribution encode(const Tensor& x, const Tensor& laplacian, const ParamStore& store,
                          const EncoderConfig& cfg) {
  Tape tape;
  LatentVars v = encode(tape, store, x, tape.constant(laplacian), cfg);
  return {v.mu.value(), v.log_sigma.value()};
}

Var reparameterize(const LatentVars& dist, const Tensor& noise) {
  if (noise.shape() != dist.mu.value().shape())
    throw DimensionError("reparameterize: noise " + shape_str(noise.shape()) + " vs mu " +
                         shape_str(dist.mu.value().shape()));
  Tape& tape = dist.mu.tape();
  return ops::add(dist.mu, ops::hadamard(ops::exp(dist.log_sigma), tape.constant(noise)));
}

LatentSample reparameterize(const LatentDistribution& dist, const Tensor& noise) {
  if (noise.shape() != dist.mu.shape())
    throw DimensionError("reparameterize: noise " + shape_str(noise.shape()) + " vs mu " +
                         shape_str(dist.mu.shape()));
  Tensor z = dist.mu;
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += std::exp(dist.log_sigma[k]) * noise[k];
  return {std::move(z), noise};
}

}  // namespace dvgnn
