#include "dvgnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvgnn/errors.hpp"
#include "dvgnn/graphs.hpp"
#include "dvgnn/parallel.hpp"

namespace dvgnn {
namespace {

void accumulate_mean(ParamStore& store, std::span<const std::string> names, std::span<const GradientMap> grads) {
  store.zero_grad();
  double inv = 1.0 / static_cast<double>(grads.size());
  for (const auto& gm : grads)
    for (const auto& name : names) {
      auto it = gm.find(name);
      if (it == gm.end()) continue;
      Tensor& g = store.grad(name);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += it->second[k] * inv;
    }
  for (const auto& name : names)
    if (!store.grad(name).all_finite()) throw NumericError("non-finite gradient for " + name);
}

}  // namespace

void adam_step(ParamStore& store, OptimizerState& state, std::span<const std::string> names, double lr,
               double beta1, double beta2, double eps) {
  ++state.step;
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (const auto& name : names) {
    Tensor& w = store.value(name);
    const Tensor& g = store.grad(name);
    auto [mit, m_new] = state.m.try_emplace(name, Tensor(w.shape()));
    auto [vit, v_new] = state.v.try_emplace(name, Tensor(w.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      double mh = m[k] / c1, vh = v[k] / c2;
      w[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

double clip_gradients(ParamStore& store, std::span<const std::string> names, double max_norm) {
  double norm = store.grad_norm(names);
  if (max_norm > 0.0 && norm > max_norm) {
    double f = max_norm / norm;
    for (const auto& name : names)
      for (double& g : store.grad(name).values()) g *= f;
  }
  return norm;
}

std::vector<std::string> Model::graph_params() const {
  auto out = params.names_with_prefix("enc.");
  auto dec = params.names_with_prefix("dec.");
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

Model make_model(const EncoderConfig& enc, const DecoderConfig& dec, const ForecastConfig& fc, std::size_t p,
                 const Graph& predefined, bool mask_enabled, std::uint64_t seed) {
  if (p < 2) throw ContractError("window length p must be at least 2");
  if (fc.steps != p - 1) throw ContractError("forecaster steps must equal p - 1");
  Model m;
  m.enc = enc;
  m.dec = dec;
  m.fc = fc;
  m.p = p;
  Rng rng(derive_seed(seed, 0));
  init_encoder(m.params, enc, rng);
  m.params.add(dec_names::Sigma, Tensor::matrix(predefined.n_nodes(), predefined.n_nodes()));
  init_forecaster(m.params, fc, rng);
  m.encoder_laplacian = normalize_laplacian(predefined);
  m.static_laplacian = m.encoder_laplacian;
  if (mask_enabled) m.mask = mask_pattern(predefined);
  return m;
}

WindowGraphLoss graph_window_loss(const Model& model, std::span<const Tensor> window, std::span<const Tensor> noise) {
  Tape tape;
  Var lap = tape.constant(model.encoder_laplacian);
  std::vector<LatentVars> dists;
  for (const Tensor& x : window) dists.push_back(encode(tape, model.params, x, lap, model.enc));
  Var sigma = tape.parameter(model.params, dec_names::Sigma);
  if (model.mask) sigma = ops::hadamard(sigma, tape.constant(*model.mask));
  Var loss = elbo_total(dists, sigma, noise, model.dec);

  WindowGraphLoss out;
  out.loss = loss.value().item();
  out.grads = tape.backward(loss);
  std::size_t n = model.encoder_laplacian.rows();
  out.min_sigma.assign(n, INFINITY);
  for (const auto& d : dists) {
    const Tensor& ls = d.log_sigma.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < ls.cols(); ++k) out.min_sigma[i] = std::min(out.min_sigma[i], std::exp(ls(i, k)));
  }
  return out;
}

std::vector<Tensor> forecast_inputs(std::span<const Tensor> window) {
  return std::vector<Tensor>(window.begin() + 1, window.end());
}

std::vector<Tensor> window_laplacians(const Model& model, std::span<const Tensor> window, bool static_graph) {
  if (static_graph) return std::vector<Tensor>(window.size() - 1, model.static_laplacian);
  const Tensor* mask = model.mask ? &*model.mask : nullptr;
  WindowGraphs g = infer_window_graphs(window, model.encoder_laplacian, model.params, model.enc, model.dec, mask);
  std::vector<Tensor> out;
  // Row j of the propagation matrix gathers from the sources i of edges i -> j.
  for (const Tensor& a : g.transition) out.push_back(normalize_laplacian(transpose(a)));
  return out;
}

void project_sigma(Model& model, std::span<const double> min_sigma) {
  Tensor& s = model.params.value(dec_names::Sigma);
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) {
      double bound = 0.99 * min_sigma[i] * min_sigma[j];
      s(i, j) = std::clamp(s(i, j), -bound, bound);
      if (model.mask && !((*model.mask)(i, j) > 0.0)) s(i, j) = 0.0;
    }
}

Trainer::Trainer(Model& model, const TimeSeriesDataset& normalized, const NormStats& stats, std::size_t horizon,
                 TrainConfig cfg)
    : model_(model),
      data_(normalized),
      stats_(stats),
      horizon_(horizon),
      cfg_(cfg),
      shuffle_rng_(derive_seed(cfg.seed, 1)),
      noise_rng_(derive_seed(cfg.seed, 2)) {
  if (cfg_.batch == 0) throw ContractError("batch size must be positive");
  if (!(cfg_.lr_graph > 0.0) || !(cfg_.lr_forecast > 0.0)) throw ContractError("learning rates must be positive");
}

double Trainer::graph_batch(std::span<const Window> batch, std::size_t epoch, std::size_t index) {
  const std::size_t p = model_.p, n = data_.n_nodes(), h = model_.enc.hidden2;
  std::vector<std::vector<Tensor>> noise(batch.size());
  for (auto& seq : noise)
    for (std::size_t t = 0; t < p; ++t) {
      Tensor e = Tensor::matrix(n, h);
      for (double& v : e.values()) v = noise_rng_.normal();
      seq.push_back(std::move(e));
    }
  std::vector<WindowGraphLoss> res(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    auto x = window_inputs(data_, batch[k], p);
    res[k] = graph_window_loss(model_, x, noise[k]);
  });
  double loss = 0.0;
  std::vector<GradientMap> grads;
  std::vector<double> min_sigma(n, INFINITY);
  for (auto& r : res) {
    loss += r.loss;
    grads.push_back(std::move(r.grads));
    for (std::size_t i = 0; i < n; ++i) min_sigma[i] = std::min(min_sigma[i], r.min_sigma[i]);
  }
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss))
    throw NumericError("graph stage diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(index));
  auto names = model_.graph_params();
  try {
    accumulate_mean(model_.params, names, grads);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (graph stage, epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(index) + ")");
  }
  clip_gradients(model_.params, names, cfg_.grad_clip);
  adam_step(model_.params, graph_opt_, names, cfg_.lr_graph);
  project_sigma(model_, min_sigma);
  return loss;
}

double Trainer::forecast_batch(std::span<const Window> batch, std::span<const std::vector<Tensor>> laplacians,
                               std::size_t epoch, std::size_t index) {
  const std::size_t p = model_.p;
  std::vector<double> losses(batch.size());
  std::vector<GradientMap> grads(batch.size());
  parallel_for(batch.size(), [&](std::size_t k) {
    auto x = forecast_inputs(window_inputs(data_, batch[k], p));
    Tensor y = window_targets(data_, batch[k], p, horizon_);
    Tape tape;
    Var loss = l2_loss(predict(tape, model_.params, x, laplacians[k], model_.fc), y);
    losses[k] = loss.value().item();
    grads[k] = tape.backward(loss);
  });
  double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(batch.size());
  if (!std::isfinite(loss))
    throw NumericError("forecast stage diverged at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(index));
  auto names = model_.forecast_params();
  try {
    accumulate_mean(model_.params, names, grads);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (forecast stage, epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(index) + ")");
  }
  clip_gradients(model_.params, names, cfg_.grad_clip);
  adam_step(model_.params, forecast_opt_, names, cfg_.lr_forecast);
  return loss;
}

std::vector<std::vector<Tensor>> Trainer::laplacians_for(std::span<const Window> windows) {
  std::vector<std::vector<Tensor>> out(windows.size());
  parallel_for(windows.size(), [&](std::size_t k) {
    out[k] = window_laplacians(model_, window_inputs(data_, windows[k], model_.p), cfg_.static_graph);
  });
  return out;
}

std::vector<EpochLog> Trainer::train_graph_stage(std::span<const Window> train) {
  if (train.empty()) throw ContractError("train_graph_stage: no training windows");
  std::vector<Window> order(train.begin(), train.end());
  std::vector<EpochLog> log;
  for (std::size_t e = 1; e <= cfg_.epochs_graph; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng_.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch, ++batches) {
      std::size_t len = std::min(cfg_.batch, order.size() - b);
      total += graph_batch(std::span(order).subspan(b, len), e, batches);
    }
    log.push_back({"graph", e, total / static_cast<double>(batches), NAN});
  }
  return log;
}

std::vector<EpochLog> Trainer::train_forecast_stage(std::span<const Window> train, std::span<const Window> val) {
  if (train.empty()) throw ContractError("train_forecast_stage: no training windows");
  auto train_laps = laplacians_for(train);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  for (std::size_t e = 1; e <= cfg_.epochs_forecast; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng_.engine());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch, ++batches) {
      std::size_t len = std::min(cfg_.batch, order.size() - b);
      std::vector<Window> wins;
      std::vector<std::vector<Tensor>> laps;
      for (std::size_t k = b; k < b + len; ++k) {
        wins.push_back(train[order[k]]);
        laps.push_back(train_laps[order[k]]);
      }
      total += forecast_batch(wins, laps, e, batches);
    }
    log.push_back({"forecast", e, total / static_cast<double>(batches), val.empty() ? NAN : evaluate_rmse(val)});
  }
  return log;
}

std::vector<EpochLog> Trainer::train_joint(std::span<const Window> train, std::span<const Window> val) {
  if (train.empty()) throw ContractError("train_joint: no training windows");
  std::vector<Window> order(train.begin(), train.end());
  std::vector<EpochLog> log;
  std::size_t epochs = std::max(cfg_.epochs_graph, cfg_.epochs_forecast);
  for (std::size_t e = 1; e <= epochs; ++e) {
    std::shuffle(order.begin(), order.end(), shuffle_rng_.engine());
    double gtotal = 0.0, ftotal = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch, ++batches) {
      auto batch = std::span(order).subspan(b, std::min(cfg_.batch, order.size() - b));
      if (e <= cfg_.epochs_graph) gtotal += graph_batch(batch, e, batches);
      if (e <= cfg_.epochs_forecast) ftotal += forecast_batch(batch, laplacians_for(batch), e, batches);
    }
    if (e <= cfg_.epochs_graph) log.push_back({"graph", e, gtotal / static_cast<double>(batches), NAN});
    if (e <= cfg_.epochs_forecast)
      log.push_back({"forecast", e, ftotal / static_cast<double>(batches), val.empty() ? NAN : evaluate_rmse(val)});
  }
  return log;
}

double Trainer::evaluate_rmse(std::span<const Window> windows) {
  if (windows.empty()) throw ContractError("evaluate_rmse: no windows");
  const std::size_t p = model_.p, f = data_.target_feature;
  std::vector<double> sq(windows.size());
  parallel_for(windows.size(), [&](std::size_t k) {
    auto x = window_inputs(data_, windows[k], p);
    auto laps = window_laplacians(model_, x, cfg_.static_graph);
    Tensor pred = predict(forecast_inputs(x), laps, model_.params, model_.fc);
    Tensor y = window_targets(data_, windows[k], p, horizon_);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i)
      for (std::size_t c = 0; c < pred.cols(); ++c) {
        double d = stats_.denormalize(pred(i, c), f, i) - stats_.denormalize(y(i, c), f, i);
        acc += d * d;
      }
    sq[k] = acc;
  });
  double total = std::accumulate(sq.begin(), sq.end(), 0.0);
  return std::sqrt(total / static_cast<double>(windows.size() * data_.n_nodes() * horizon_));
}

}  // namespace dvgnn
