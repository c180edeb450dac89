#include "dvgnn/forecaster.hpp"

#include "dvgnn/encoder.hpp"
#include "dvgnn/errors.hpp"

namespace dvgnn {

std::string fc_names::conv_w(std::size_t k) { return "fc.conv_w" + std::to_string(k); }

void init_forecaster(ParamStore& store, const ForecastConfig& cfg, Rng& rng) {
  if (cfg.nodes == 0 || cfg.features == 0 || cfg.steps == 0 || cfg.channels == 0 || cfg.horizon == 0)
    throw ContractError("forecaster sizes must be positive");
  if (cfg.kernel % 2 == 0) throw ContractError("temporal kernel must be odd");
  std::size_t n = cfg.nodes, c = cfg.channels, t = cfg.steps;
  store.add(fc_names::gcn_a, glorot_uniform(cfg.features, c, rng));
  store.add(fc_names::gcn_b, glorot_uniform(c, c, rng));
  store.add(fc_names::att_Ve, glorot_uniform(t, t, rng));
  store.add(fc_names::att_be, Tensor::matrix(t, t));
  store.add(fc_names::att_U1, glorot_uniform(n, 1, rng));
  store.add(fc_names::att_U2, glorot_uniform(c, n, rng));
  store.add(fc_names::att_U3, glorot_uniform(c, 1, rng));
  for (std::size_t k = 0; k < cfg.kernel; ++k) store.add(fc_names::conv_w(k), glorot_uniform(c, c, rng));
  store.add(fc_names::conv_b, Tensor::matrix(1, c));
  store.add(fc_names::out_w, Tensor::matrix(t * c, cfg.horizon));
  store.add(fc_names::out_b, Tensor::matrix(1, cfg.horizon));
  // Row i holds node i's steps x horizon weights, row-major.
  Tensor res = Tensor::matrix(n, t * cfg.horizon);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < cfg.horizon; ++k) res(i, (t - 1) * cfg.horizon + k) = 1.0;
  store.add(fc_names::res_w, std::move(res));
  store.add(fc_names::res_b, Tensor::matrix(n, cfg.horizon));
}

Var per_node_projection(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || wv.rows() != xv.rows() || xv.cols() == 0 ||
      wv.cols() % xv.cols() != 0)
    throw DimensionError("per_node_projection: " + shape_str(xv.shape()) + " with " + shape_str(wv.shape()));
  const std::size_t n = xv.rows(), t = xv.cols(), k = wv.cols() / t;
  Tensor y = Tensor::matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t c = 0; c < k; ++c) y(i, c) += xv(i, s) * wv(i, s * k + c);
  return x.tape().record(std::move(y), {x, w}, [t, k](const BackwardContext& c) {
    const Tensor& xv = *c.inputs[0];
    const Tensor& wv = *c.inputs[1];
    const Tensor& g = c.output_grad;
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t s = 0; s < t; ++s)
        for (std::size_t o = 0; o < k; ++o) {
          if (c.input_grads[0]) (*c.input_grads[0])(i, s) += g(i, o) * wv(i, s * k + o);
          if (c.input_grads[1]) (*c.input_grads[1])(i, s * k + o) += g(i, o) * xv(i, s);
        }
  }, "per_node_projection");
}

std::vector<Var> dynamic_gcn_forward(Tape& tape, const ParamStore& store, std::span<const Tensor> window,
                                     std::span<const Tensor> laplacians) {
  if (window.size() != laplacians.size())
    throw ContractError("dynamic_gcn_forward: " + std::to_string(window.size()) + " steps but " +
                        std::to_string(laplacians.size()) + " laplacians");
  Var wa = tape.parameter(store, fc_names::gcn_a);
  Var wb = tape.parameter(store, fc_names::gcn_b);
  std::vector<Var> out;
  for (std::size_t t = 0; t < window.size(); ++t) {
    Var l = tape.constant(laplacians[t]);
    Var h1 = ops::relu(ops::matmul(l, ops::matmul(tape.constant(window[t]), wa)));
    out.push_back(ops::relu(ops::matmul(l, ops::matmul(h1, wb))));
  }
  return out;
}

AttentionResult temporal_attention(Tape& tape, const ParamStore& store, std::span<const Var> h) {
  if (h.empty()) throw ContractError("temporal_attention: empty sequence");
  std::size_t steps = h.size(), n = h[0].value().rows(), c = h[0].value().cols();
  Var ve = tape.parameter(store, fc_names::att_Ve);
  Var be = tape.parameter(store, fc_names::att_be);
  Var u1 = tape.parameter(store, fc_names::att_U1);
  Var u2 = tape.parameter(store, fc_names::att_U2);
  Var u3 = tape.parameter(store, fc_names::att_U3);
  if (ve.value().shape() != Shape{steps, steps} || u1.value().shape() != Shape{n, 1} ||
      u2.value().shape() != Shape{c, n} || u3.value().shape() != Shape{c, 1})
    throw DimensionError("temporal_attention: parameters do not fit " + std::to_string(steps) + " steps, " +
                         std::to_string(n) + " nodes, " + std::to_string(c) + " channels");

  Var u1t = ops::transpose(u1);
  std::vector<Var> left_rows, right_cols, flat;
  for (const Var& ht : h) {
    left_rows.push_back(ops::matmul(u1t, ht));       // 1 x C
    right_cols.push_back(ops::matmul(ht, u3));       // n x 1
    flat.push_back(ops::reshape(ht, {1, n * c}));
  }
  Var left = ops::matmul(ops::vstack(left_rows), u2);  // T x n
  Var right = ops::hstack(right_cols);                 // n x T
  Var e = ops::matmul(ve, ops::sigmoid(ops::add(ops::matmul(left, right), be)));
  Var weights = ops::softmax_rows(e);
  Var mixed = ops::matmul(weights, ops::vstack(flat));  // T x nC

  AttentionResult res{weights, {}};
  for (std::size_t t = 0; t < steps; ++t) res.out.push_back(ops::reshape(ops::slice_rows(mixed, t, 1), {n, c}));
  return res;
}

std::vector<Var> temporal_conv(Tape& tape, const ParamStore& store, std::span<const Var> x, std::size_t kernel) {
  std::vector<Var> w;
  for (std::size_t k = 0; k < kernel; ++k) w.push_back(tape.parameter(store, fc_names::conv_w(k)));
  Var b = tape.parameter(store, fc_names::conv_b);
  const long half = static_cast<long>(kernel / 2);
  const long steps = static_cast<long>(x.size());
  std::vector<Var> out;
  for (long t = 0; t < steps; ++t) {
    Var acc;
    bool first = true;
    for (long k = 0; k < static_cast<long>(kernel); ++k) {
      long s = t + k - half;
      if (s < 0 || s >= steps) continue;
      Var term = ops::matmul(x[s], w[k]);
      acc = first ? term : ops::add(acc, term);
      first = false;
    }
    out.push_back(ops::relu(ops::add_row(acc, b)));
  }
  return out;
}

Var predict(Tape& tape, const ParamStore& store, std::span<const Tensor> window,
            std::span<const Tensor> laplacians, const ForecastConfig& cfg) {
  if (window.size() != cfg.steps)
    throw ContractError("predict: expected " + std::to_string(cfg.steps) + " steps, got " +
                        std::to_string(window.size()));
  std::size_t n = window[0].rows();
  auto h = dynamic_gcn_forward(tape, store, window, laplacians);
  auto att = temporal_attention(tape, store, h);
  auto conv = temporal_conv(tape, store, att.out, cfg.kernel);
  Var features = ops::hstack(conv);  // n x (T_r * C)
  Var proj = ops::add_row(ops::matmul(features, tape.parameter(store, fc_names::out_w)),
                          tape.parameter(store, fc_names::out_b));

  Tensor raw = Tensor::matrix(n, cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t)
    for (std::size_t i = 0; i < n; ++i) raw(i, t) = window[t](i, cfg.target_feature);
  Var res = ops::add(per_node_projection(tape.constant(std::move(raw)), tape.parameter(store, fc_names::res_w)),
                     tape.parameter(store, fc_names::res_b));
  return ops::add(proj, res);
}

Tensor predict(std::span<const Tensor> window, std::span<const Tensor> laplacians, const ParamStore& store,
               const ForecastConfig& cfg) {
  Tape tape;
  return predict(tape, store, window, laplacians, cfg).value();
}

Var l2_loss(Var pred, const Tensor& target) {
  if (pred.value().shape() != target.shape())
    throw DimensionError("l2_loss: " + shape_str(pred.value().shape()) + " vs " + shape_str(target.shape()));
  return ops::mean(ops::square(ops::sub(pred, pred.tape().constant(target))));
}

double l2_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("l2_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += (pred[k] - target[k]) * (pred[k] - target[k]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace dvgnn
