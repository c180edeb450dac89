#pragma once

#include <span>
#include <string>
#include <vector>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/encoder.hpp"
#include "dvgnn/tensor.hpp"

namespace dvgnn {

inline constexpr double kGuard = 1e-4;

// How the edge density is centred inside the ELBO.
//   posterior:    z = mu + sigma*eps, centred at mu (so z - mu = sigma*eps).
//   standardized: mu is standardized over the window per node and latent dim,
//                 z = u + sigma*eps, centred at 0.
enum class DecoderMode { Posterior, Standardized };

struct DecoderConfig {
  double guard = kGuard;
  double reg_weight = 1e-3;
  DecoderMode mode = DecoderMode::Standardized;
  // Added to the window variance before standardizing. Any positive floor lets
  // a near-constant latent drop below it and shrink u towards 0, which the edge
  // term rewards, so the default is exact standardization.
  double std_eps = 0.0;
};

namespace dec_names {
inline const std::string Sigma = "dec.Sigma";
}

// 2 (I + Psi Psi^T).
Tensor trapezoid_covariance(const Tensor& psi);

// Joint log density of the lagged latent pair (z_i, z_j) with cross term Sigma_ij.
double edge_joint_logdensity(double z_i, double z_j, double mu_i, double mu_j, double sigma_i,
                             double sigma_j, double sigma_ij, double guard);
// Quadratic part after substituting z = mu + sigma*eps.
double elbo_edge_quadratic(double sigma_i, double sigma_j, double sigma_ij, double eps_i, double eps_j,
                           double guard);
// Full per-edge term: quadratic part plus normalizer.
double elbo_edge_reparam(double sigma_i, double sigma_j, double sigma_ij, double eps_i, double eps_j,
                         double guard);
// KL(N(mu, sigma^2) || N(0, 1)).
double kl_standard_normal(double mu, double sigma);

// Per node and column, (x_t - mean) / sqrt(var + eps) over the sequence (population variance).
std::vector<Tensor> standardize_sequence(std::span<const Tensor> xs, double eps);

// Negated sequence ELBO over one window of p >= 2 steps: edge terms for every
// ordered pair (i, j) and latent dim between consecutive steps, KL weighted 1 at
// the ends and 2 inside, plus reg_weight * sum of log(sigma_i sigma_j).
Var elbo_total(std::span<const LatentVars> dists, Var sigma_cross, std::span<const Tensor> noise,
               const DecoderConfig& cfg);

// score(i -> j) = mean over latent dims of the joint log density of (z_i^prev, z_j^curr).
Tensor causal_scores(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                     const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard);

// causal_scores minus the same scores with Sigma = 0: the part of the pair
// density explained by the cross term alone.
Tensor coupling_scores(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                       const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard);

// Conditional density p(z_j^curr | z_i^prev), averaged over latent dims, then
// exp(logdens - rowmax). Entries where mask is 0 are forced to 0 when a mask is given.
Tensor transition_graph(const LatentSample& prev, const LatentSample& curr, const LatentDistribution& dprev,
                        const LatentDistribution& dcurr, const Tensor& sigma_cross, double guard,
                        const Tensor* mask);

// Graphs for the p - 1 transitions of one window, computed from posterior means (eps = 0).
struct WindowGraphs {
  std::vector<Tensor> causal;
  std::vector<Tensor> transition;
  std::vector<Tensor> coupling;
};

WindowGraphs infer_window_graphs(std::span<const Tensor> window, const Tensor& laplacian,
                                 const ParamStore& store, const EncoderConfig& ecfg,
                                 const DecoderConfig& dcfg, const Tensor* mask);

}  // namespace dvgnn
