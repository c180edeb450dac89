#include "dvgnn/selfcheck.hpp"

#include <optional>

#include "dvgnn/encoder.hpp"
#include "dvgnn/forecaster.hpp"
#include "dvgnn/graphs.hpp"
#include "dvgnn/random.hpp"

namespace dvgnn {
namespace {

Tensor uniform_matrix(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_adjacency(std::size_t n, Rng& rng) {
  Tensor a = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) a(i, j) = rng.uniform(0.0, 1.0);
  return a;
}

}  // namespace

LossInstance elbo_instance(std::uint64_t seed, DecoderMode mode, bool linear_logsigma, bool masked) {
  constexpr std::size_t n = 3, f = 2, p = 4;
  Rng rng(seed);
  EncoderConfig ecfg{f, 4, 3, linear_logsigma};
  DecoderConfig dcfg;
  dcfg.mode = mode;
  LossInstance inst;
  init_encoder(inst.point, ecfg, rng);
  inst.point.add(dec_names::Sigma, uniform_matrix(n, n, -0.2, 0.2, rng));

  Tensor lap = normalize_laplacian(random_adjacency(n, rng));
  std::vector<Tensor> window, noise;
  for (std::size_t t = 0; t < p; ++t) window.push_back(uniform_matrix(n, f, 0.0, 1.0, rng));
  for (std::size_t t = 0; t < p; ++t) {
    Tensor e = Tensor::matrix(n, ecfg.hidden2);
    for (double& v : e.values()) v = rng.normal();
    noise.push_back(std::move(e));
  }
  std::optional<Tensor> mask;
  if (masked) {
    mask = Tensor::matrix(n, n);
    for (double& v : mask->values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  inst.program = [=](Tape& tape, const ParamStore& store) {
    Var l = tape.constant(lap);
    std::vector<LatentVars> dists;
    for (const Tensor& x : window) dists.push_back(encode(tape, store, x, l, ecfg));
    Var sigma = tape.parameter(store, dec_names::Sigma);
    if (mask) sigma = ops::hadamard(sigma, tape.constant(*mask));
    return elbo_total(dists, sigma, noise, dcfg);
  };
  return inst;
}

LossInstance forecast_instance(std::uint64_t seed) {
  ForecastConfig cfg;
  cfg.nodes = 3;
  cfg.features = 2;
  cfg.steps = 4;
  cfg.channels = 2;
  cfg.kernel = 3;
  cfg.horizon = 2;
  Rng rng(seed);
  LossInstance inst;
  init_forecaster(inst.point, cfg, rng);
  // Zero-initialized heads would leave whole branches with vanishing gradients.
  for (const auto& name : inst.point.names())
    for (double& v : inst.point.value(name).values()) v += rng.uniform(-0.3, 0.3);

  std::vector<Tensor> window, laps;
  for (std::size_t t = 0; t < cfg.steps; ++t) window.push_back(uniform_matrix(cfg.nodes, cfg.features, 0.0, 1.0, rng));
  for (std::size_t t = 0; t < cfg.steps; ++t) laps.push_back(normalize_laplacian(random_adjacency(cfg.nodes, rng)));
  Tensor target = uniform_matrix(cfg.nodes, cfg.horizon, 0.0, 1.0, rng);
  inst.program = [=](Tape& tape, const ParamStore& store) {
    return l2_loss(predict(tape, store, window, laps, cfg), target);
  };
  return inst;
}

}  // namespace dvgnn
