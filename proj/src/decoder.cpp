#include "dvgnn/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dvgnn/errors.hpp"

namespace dvgnn {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double kl_weight(std::size_t t, std::size_t p) { return (t == 0 || t + 1 == p) ? 1.0 : 2.0; }

// A constant sequence has zero deviations; scale 1 keeps it at u = 0 without dividing by zero.
double std_scale(double var, double eps) {
  double s = std::sqrt(var + eps);
  return s > 0.0 ? s : 1.0;
}

}  // namespace

Tensor trapezoid_covariance(const Tensor& psi) {
  if (psi.rank() != 2 || psi.rows() != psi.cols())
    throw DimensionError("trapezoid_covariance: " + shape_str(psi.shape()));
  Tensor out = matmul(psi, transpose(psi));
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += 1.0;
  for (double& v : out.values()) v *= 2.0;
  return out;
}

double edge_joint_logdensity(double z_i, double z_j, double mu_i, double mu_j, double sigma_i,
                             double sigma_j, double sigma_ij, double guard) {
  double si2 = sigma_i * sigma_i, sj2 = sigma_j * sigma_j;
  double det = si2 * sj2 - sigma_ij * sigma_ij + guard;
  double a = z_i - mu_i, b = z_j - mu_j;
  double q = sj2 * a * a + si2 * b * b - 2.0 * sigma_ij * a * b;
  return -kLog2Pi - 0.5 * std::log(det) - q / (2.0 * det);
}

double elbo_edge_quadratic(double sigma_i, double sigma_j, double sigma_ij, double eps_i, double eps_j,
                           double guard) {
  double ss = sigma_i * sigma_i * sigma_j * sigma_j;
  double det = ss - sigma_ij * sigma_ij + guard;
  return (2.0 * sigma_ij * sigma_i * sigma_j * eps_i * eps_j - ss * (eps_i * eps_i + eps_j * eps_j)) /
         (2.0 * det);
}

double elbo_edge_reparam(double sigma_i, double sigma_j, double sigma_ij, double eps_i, double eps_j,
                         double guard) {
  double det = sigma_i * sigma_i * sigma_j * sigma_j - sigma_ij * sigma_ij + guard;
  return -kLog2Pi - 0.5 * std::log(det) + elbo_edge_quadratic(sigma_i, sigma_j, sigma_ij, eps_i, eps_j, guard);
}

double kl_standard_normal(double mu, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("kl_standard_normal: sigma must be positive");
  double s2 = sigma * sigma;
  return 0.5 * (mu * mu + s2 - std::log(s2) - 1.0);
}

std::vector<Tensor> standardize_sequence(std::span<const Tensor> xs, double eps) {
  std::vector<Tensor> out(xs.begin(), xs.end());
  if (xs.empty()) return out;
  std::size_t p = xs.size(), m = xs[0].size();
  for (std::size_t k = 0; k < m; ++k) {
    double mean = 0.0;
    for (std::size_t t = 0; t < p; ++t) mean += xs[t][k];
    mean /= p;
    double var = 0.0;
    for (std::size_t t = 0; t < p; ++t) var += (xs[t][k] - mean) * (xs[t][k] - mean);
    double s = std_scale(var / p, eps);
    for (std::size_t t = 0; t < p; ++t) out[t][k] = (xs[t][k] - mean) / s;
  }
  return out;
}

Var elbo_total(std::span<const LatentVars> dists, Var sigma_cross, std::span<const Tensor> noise,
               const DecoderConfig& cfg) {
  const std::size_t p = dists.size();
  if (p < 2) throw ContractError("elbo_total: need at least 2 steps, got " + std::to_string(p));
  if (noise.size() != p) throw ContractError("elbo_total: one noise draw per step required");
  const Shape& lat = dists[0].mu.value().shape();
  const std::size_t n = lat[0], h = lat[1];
  const Tensor& S = sigma_cross.value();
  if (S.shape() != Shape{n, n})
    throw DimensionError("elbo_total: Sigma " + shape_str(S.shape()) + " for " + std::to_string(n) + " nodes");
  for (std::size_t t = 0; t < p; ++t)
    if (dists[t].mu.value().shape() != lat || dists[t].log_sigma.value().shape() != lat ||
        noise[t].shape() != lat)
      throw DimensionError("elbo_total: inconsistent latent shapes at step " + std::to_string(t));

  std::vector<Var> inputs;
  for (const auto& d : dists) inputs.push_back(d.mu);
  for (const auto& d : dists) inputs.push_back(d.log_sigma);
  inputs.push_back(sigma_cross);

  std::vector<Tensor> eps(noise.begin(), noise.end());
  const double g = cfg.guard, reg = cfg.reg_weight;
  const bool standardized = cfg.mode == DecoderMode::Standardized;
  const double std_eps = cfg.std_eps;

  // Shared by forward and backward: sigma and the centred deviations.
  auto prepare = [=](std::span<const Tensor* const> in, std::vector<Tensor>& sig, std::vector<Tensor>& dev,
                     std::vector<Tensor>& u, std::vector<double>& scale) {
    sig.resize(p);
    dev.resize(p);
    std::vector<Tensor> mus;
    for (std::size_t t = 0; t < p; ++t) {
      sig[t] = *in[p + t];
      for (double& v : sig[t].values()) v = std::exp(v);
      mus.push_back(*in[t]);
    }
    if (standardized) {
      u = standardize_sequence(mus, std_eps);
      scale.assign(n * h, 0.0);
      for (std::size_t k = 0; k < n * h; ++k) {
        double mean = 0.0, var = 0.0;
        for (std::size_t t = 0; t < p; ++t) mean += mus[t][k];
        mean /= p;
        for (std::size_t t = 0; t < p; ++t) var += (mus[t][k] - mean) * (mus[t][k] - mean);
        scale[k] = std_scale(var / p, std_eps);
      }
    }
    for (std::size_t t = 0; t < p; ++t) {
      dev[t] = sig[t];
      for (std::size_t k = 0; k < n * h; ++k) dev[t][k] = sig[t][k] * eps[t][k] + (standardized ? u[t][k] : 0.0);
    }
  };

  std::vector<const Tensor*> in_vals;
  for (const Var& v : inputs) in_vals.push_back(&v.value());
  std::vector<Tensor> sig, dev, u;
  std::vector<double> scale;
  prepare(in_vals, sig, dev, u, scale);

  double edge = 0.0, kl = 0.0, logsum = 0.0;
  for (std::size_t t = 1; t < p; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t d = 0; d < h; ++d) {
          double si = sig[t - 1](i, d), sj = sig[t](j, d);
          double a = dev[t - 1](i, d), b = dev[t](j, d), s = S(i, j);
          double det = si * si * sj * sj - s * s + g;
          double q = sj * sj * a * a + si * si * b * b - 2.0 * s * a * b;
          edge += -kLog2Pi - 0.5 * std::log(det) - q / (2.0 * det);
          logsum += dists[t - 1].log_sigma.value()(i, d) + dists[t].log_sigma.value()(j, d);
        }
  for (std::size_t t = 0; t < p; ++t) {
    // The sampled posterior is N(u, sigma^2) in standardized mode.
    const Tensor& mu = standardized ? u[t] : dists[t].mu.value();
    const Tensor& ls = dists[t].log_sigma.value();
    double acc = 0.0;
    for (std::size_t k = 0; k < n * h; ++k) acc += 0.5 * (mu[k] * mu[k] + sig[t][k] * sig[t][k] - 2.0 * ls[k] - 1.0);
    kl += kl_weight(t, p) * acc;
  }
  double loss = -edge + kl + reg * logsum;

  Tape& tape = sigma_cross.tape();
  return tape.record(Tensor::scalar(loss), inputs, [=](const BackwardContext& c) {
    std::vector<Tensor> sig, dev, u;
    std::vector<double> scale;
    prepare(c.inputs, sig, dev, u, scale);
    const Tensor& S = *c.inputs[2 * p];
    const double g0 = c.output_grad[0];

    std::vector<Tensor> gdev(p, Tensor(Shape{n, h})), gsig(p, Tensor(Shape{n, h}));
    Tensor gS(Shape{n, n});
    for (std::size_t t = 1; t < p; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double s = S(i, j);
          double gs_acc = 0.0;
          for (std::size_t d = 0; d < h; ++d) {
            double si = sig[t - 1](i, d), sj = sig[t](j, d);
            double a = dev[t - 1](i, d), b = dev[t](j, d);
            double si2 = si * si, sj2 = sj * sj;
            double det = si2 * sj2 - s * s + g;
            double q = sj2 * a * a + si2 * b * b - 2.0 * s * a * b;
            double det2 = det * det;
            // d(ell)/dx for x in {a, b, sigma_i, sigma_j, Sigma}; the loss takes -ell.
            double da = -(sj2 * a - s * b) / det;
            double db = -(si2 * b - s * a) / det;
            double Dsi = 2.0 * si * sj2, Qsi = 2.0 * si * b * b;
            double Dsj = 2.0 * sj * si2, Qsj = 2.0 * sj * a * a;
            double DS = -2.0 * s, QS = -2.0 * a * b;
            double dsi = -0.5 * Dsi / det - (Qsi * det - q * Dsi) / (2.0 * det2);
            double dsj = -0.5 * Dsj / det - (Qsj * det - q * Dsj) / (2.0 * det2);
            double dS = -0.5 * DS / det - (QS * det - q * DS) / (2.0 * det2);
            gdev[t - 1](i, d) -= da;
            gdev[t](j, d) -= db;
            gsig[t - 1](i, d) -= dsi;
            gsig[t](j, d) -= dsj;
            gs_acc -= dS;
          }
          gS(i, j) += gs_acc;
        }

    for (std::size_t t = 0; t < p; ++t) {
      double w = kl_weight(t, p);
      double reg_count = reg * static_cast<double>(n) * ((t >= 1 ? 1.0 : 0.0) + (t + 1 < p ? 1.0 : 0.0));
      if (Tensor* gls = c.input_grads[p + t])
        for (std::size_t k = 0; k < n * h; ++k) {
          double s = sig[t][k];
          double total_sig = gsig[t][k] + gdev[t][k] * eps[t][k];
          (*gls)[k] += g0 * (total_sig * s + w * (s * s - 1.0) + reg_count);
        }
      if (standardized) {
        // d(dev)/d(u) = 1, so gdev becomes the gradient w.r.t. u from here on.
        for (std::size_t k = 0; k < n * h; ++k) gdev[t][k] += w * u[t][k];
      } else if (Tensor* gmu = c.input_grads[t]) {
        for (std::size_t k = 0; k < n * h; ++k) (*gmu)[k] += g0 * w * (*c.inputs[t])[k];
      }
    }
    if (standardized) {
      for (std::size_t k = 0; k < n * h; ++k) {
        double mg = 0.0, mgu = 0.0;
        for (std::size_t t = 0; t < p; ++t) {
          mg += gdev[t][k];
          mgu += gdev[t][k] * u[t][k];
        }
        mg /= p;
        mgu /= p;
        for (std::size_t t = 0; t < p; ++t)
          if (Tensor* gmu = c.input_grads[t])
            (*gmu)[k] += g0 * (gdev[t][k] - mg - u[t][k] * mgu) / scale[k];
      }
    }
    if (Tensor* gs = c.input_grads[2 * p])
      for (std::size_t k = 0; k < gS.size(); ++k) (*gs)[k] += g0 * gS[k];
  }, "elbo_total");
}

Tensor causal_scores(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                     const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard) {
  std::size_t n = prev.z.rows(), h = prev.z.cols();
  if (sigma_cross.shape() != Shape{n, n})
    throw DimensionError("causal_scores: Sigma " + shape_str(sigma_cross.shape()));
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < h; ++d)
        acc += edge_joint_logdensity(prev.z(i, d), curr.z(j, d), dprev.mu(i, d), dcurr.mu(j, d),
                                     std::exp(dprev.log_sigma(i, d)), std::exp(dcurr.log_sigma(j, d)),
                                     sigma_cross(i, j), guard);
      out(i, j) = acc / h;
    }
  return out;
}

Tensor coupling_scores(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                       const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard) {
  Tensor with = causal_scores(prev, curr, dprev, dcurr, sigma_cross, guard);
  Tensor without = causal_scores(prev, curr, dprev, dcurr, Tensor(sigma_cross.shape()), guard);
  for (std::size_t k = 0; k < with.size(); ++k) with[k] -= without[k];
  return with;
}

Tensor transition_graph(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                        const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard,
                        const Tensor* mask) {
  std::size_t n = prev.z.rows(), h = prev.z.cols();
  if (sigma_cross.shape() != Shape{n, n})
    throw DimensionError("transition_graph: Sigma " + shape_str(sigma_cross.shape()));
  if (mask && mask->shape() != sigma_cross.shape())
    throw DimensionError("transition_graph: mask " + shape_str(mask->shape()));
  Tensor logd = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = sigma_cross(i, j), acc = 0.0;
      for (std::size_t d = 0; d < h; ++d) {
        double si = std::exp(dprev.log_sigma(i, d)), sj = std::exp(dcurr.log_sigma(j, d));
        double mean = dcurr.mu(j, d) + (s / (si * si)) * (prev.z(i, d) - dprev.mu(i, d));
        double var = sj * sj - s * s / (si * si) + guard;
        double r = curr.z(j, d) - mean;
        acc += -0.5 * std::log(2.0 * std::numbers::pi * var) - r * r / (2.0 * var);
      }
      logd(i, j) = acc / h;
    }
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)(i, j) > 0.0) mx = std::max(mx, logd(i, j));
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (mask && !((*mask)(i, j) > 0.0)) ? 0.0 : std::exp(logd(i, j) - mx);
  }
  return out;
}

WindowGraphs infer_window_graphs(std::span<const Tensor> window, const Tensor& laplacian,
                                 const ParamStore& store, const EncoderConfig& ecfg,
                                 const DecoderConfig& dcfg, const Tensor* mask) {
  std::size_t p = window.size();
  if (p < 2) throw ContractError("infer_window_graphs: window needs at least 2 steps");
  std::vector<LatentDistribution> dists;
  for (const Tensor& x : window) dists.push_back(encode(x, laplacian, store, ecfg));
  if (dcfg.mode == DecoderMode::Standardized) {
    std::vector<Tensor> mus;
    for (const auto& d : dists) mus.push_back(d.mu);
    auto u = standardize_sequence(mus, dcfg.std_eps);
    for (std::size_t t = 0; t < p; ++t) dists[t].mu = std::move(u[t]);
  }
  Tensor sigma = store.value(dec_names::Sigma);
  if (mask)
    for (std::size_t k = 0; k < sigma.size(); ++k)
      if (!((*mask)[k] > 0.0)) sigma[k] = 0.0;

  std::vector<LatentSample> samples;
  for (const auto& d : dists) samples.push_back({d.mu, Tensor(d.mu.shape())});
  std::vector<LatentDistribution> centred = dists;
  if (dcfg.mode == DecoderMode::Standardized)
    for (auto& d : centred) d.mu.fill(0.0);

  WindowGraphs out;
  for (std::size_t t = 1; t < p; ++t) {
    const auto& a = samples[t - 1];
    const auto& b = samples[t];
    out.causal.push_back(causal_scores(a, b, centred[t - 1], centred[t], sigma, dcfg.guard));
    out.coupling.push_back(coupling_scores(a, b, centred[t - 1], centred[t], sigma, dcfg.guard));
    out.transition.push_back(transition_graph(a, b, centred[t - 1], centred[t], sigma, dcfg.guard, mask));
  }
  return out;
}

}  // namespace dvgnn
