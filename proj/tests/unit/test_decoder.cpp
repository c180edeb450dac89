#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dvgnn/decoder.hpp"
#include "dvgnn/errors.hpp"
#include "dvgnn/graphs.hpp"
#include "dvgnn/selfcheck.hpp"
#include "helpers.hpp"

using namespace dvgnn;
using testutil::normal_matrix;
using testutil::random_matrix;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Bivariate normal log density evaluated through a dense inverse and log-determinant.
double mvn2_logpdf(double x, double y, double mx, double my, double vx, double vy, double cxy) {
  Eigen::Matrix2d cov;
  cov << vx, cxy, cxy, vy;
  Eigen::Vector2d r(x - mx, y - my);
  return -kLog2Pi - 0.5 * std::log(cov.determinant()) - 0.5 * r.dot(cov.inverse() * r);
}

Tensor scaled(Tensor t, double c) {
  for (double& v : t.values()) v *= c;
  return t;
}

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - (x - mean) * (x - mean) / (2.0 * var);
}

LatentDistribution random_dist(Rng& rng, std::size_t n, std::size_t h) {
  return {random_matrix(rng, n, h, 0.0, 1.0), random_matrix(rng, n, h, -0.7, 0.3)};
}

// Loss of elbo_total on constant inputs.
double elbo_value(const std::vector<Tensor>& mus, const std::vector<Tensor>& logsig, const Tensor& sigma,
                  const std::vector<Tensor>& noise, const DecoderConfig& cfg) {
  Tape tape;
  std::vector<LatentVars> d;
  for (std::size_t t = 0; t < mus.size(); ++t) d.push_back({tape.constant(mus[t]), tape.constant(logsig[t])});
  return elbo_total(d, tape.constant(sigma), noise, cfg).value().item();
}

}  // namespace

TEST_CASE("edge log density examples") {
  CHECK(edge_joint_logdensity(0, 0, 0, 0, 1, 1, 0, 0) == doctest::Approx(-kLog2Pi).epsilon(1e-15));
  // With Sigma = 0 and no guard the pair density factorizes.
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    double zi = rng.normal(), zj = rng.normal(), mi = rng.normal(), mj = rng.normal();
    double si = rng.uniform(0.3, 2.0), sj = rng.uniform(0.3, 2.0);
    double split = normal_logpdf(zi, mi, si * si) + normal_logpdf(zj, mj, sj * sj);
    CHECK(std::abs(edge_joint_logdensity(zi, zj, mi, mj, si, sj, 0.0, 0.0) - split) < 1e-12);
  }
}

TEST_CASE("edge log density matches a dense 2x2 normal") {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    double si = rng.uniform(0.2, 2.0), sj = rng.uniform(0.2, 2.0);
    double s = rng.uniform(-0.95, 0.95) * si * sj;
    double zi = rng.normal(), zj = rng.normal(), mi = rng.normal(), mj = rng.normal();
    double ours = edge_joint_logdensity(zi, zj, mi, mj, si, sj, s, 0.0);
    CHECK(std::abs(ours - mvn2_logpdf(zi, zj, mi, mj, si * si, sj * sj, s)) < 1e-10);
  }
}

TEST_CASE("reparameterized edge term equals the density at z = mu + sigma*eps") {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    double si = rng.uniform(0.2, 2.0), sj = rng.uniform(0.2, 2.0), s = rng.uniform(-1.0, 1.0) * si * sj;
    double mi = rng.normal(), mj = rng.normal(), ei = rng.normal(), ej = rng.normal();
    double direct = edge_joint_logdensity(mi + si * ei, mj + sj * ej, mi, mj, si, sj, s, kGuard);
    CHECK(std::abs(direct - elbo_edge_reparam(si, sj, s, ei, ej, kGuard)) < 1e-12);
  }
}

TEST_CASE("quadratic part") {
  CHECK(elbo_edge_quadratic(1, 1, 0, 1, 1, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(elbo_edge_quadratic(1, 1, 0, 0, 0, 0) == 0.0);
  CHECK(elbo_edge_quadratic(1, 1, 0.5, 1, 1, 0) == doctest::Approx(-1.0 / 1.5).epsilon(1e-14));

  // E over independent eps of the quadratic part is -sigma_i^2 sigma_j^2 / det = -4/3 here.
  Rng rng(4);
  const int draws = 200000;
  double acc = 0.0, acc2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    double v = elbo_edge_quadratic(1, 1, 0.5, rng.normal(), rng.normal(), 0.0);
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / draws, se = std::sqrt((acc2 / draws - mean * mean) / draws);
  CHECK(std::abs(mean + 4.0 / 3.0) < 3.0 * se);
}

TEST_CASE("KL to the standard normal") {
  CHECK(kl_standard_normal(0, 1) == 0.0);
  CHECK(kl_standard_normal(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kl_standard_normal(0, std::exp(1.0)) == doctest::Approx(0.5 * (std::exp(2.0) - 3.0)).epsilon(1e-14));
  CHECK_THROWS_AS(kl_standard_normal(0, 0), ContractError);

  Rng rng(5);
  for (int c = 0; c < 5; ++c) {
    double mu = rng.uniform(-1.5, 1.5), s = rng.uniform(0.3, 2.0);
    const int draws = 200000;
    double acc = 0.0, acc2 = 0.0;
    for (int k = 0; k < draws; ++k) {
      double z = mu + s * rng.normal();
      double v = normal_logpdf(z, mu, s * s) - normal_logpdf(z, 0.0, 1.0);
      acc += v;
      acc2 += v * v;
    }
    double mean = acc / draws, se = std::sqrt((acc2 / draws - mean * mean) / draws);
    CHECK(std::abs(mean - kl_standard_normal(mu, s)) < 4.0 * se);
  }
}

TEST_CASE("trapezoid covariance") {
  CHECK(max_abs_diff(trapezoid_covariance(Tensor::identity(3)), scaled(Tensor::identity(3), 4.0)) == 0.0);
  CHECK(max_abs_diff(trapezoid_covariance(Tensor::matrix(3, 3)), scaled(Tensor::identity(3), 2.0)) == 0.0);
  Tensor one = trapezoid_covariance(Tensor::from_rows({{std::exp(0.1)}}));
  CHECK(one.item() == doctest::Approx(2.0 * (1.0 + std::exp(0.2))).epsilon(1e-14));
  CHECK_THROWS_AS(trapezoid_covariance(Tensor::matrix(2, 3)), DimensionError);
}

TEST_CASE("standardize_sequence") {
  std::vector<Tensor> xs = {Tensor::from_rows({{1, 5}}), Tensor::from_rows({{3, 5}})};
  auto u = standardize_sequence(xs, 0.0);
  CHECK(u[0](0, 0) == -1.0);
  CHECK(u[1](0, 0) == 1.0);
  CHECK(u[0](0, 1) == 0.0);  // constant column stays at 0
  Rng rng(6);
  std::vector<Tensor> r;
  for (int t = 0; t < 7; ++t) r.push_back(random_matrix(rng, 3, 2));
  auto ur = standardize_sequence(r, 0.0);
  for (std::size_t k = 0; k < 6; ++k) {
    double m = 0.0, v = 0.0;
    for (const auto& t : ur) m += t[k];
    for (const auto& t : ur) v += t[k] * t[k];
    CHECK(std::abs(m / 7) < 1e-14);
    CHECK(std::abs(v / 7 - 1.0) < 1e-12);
  }
}

TEST_CASE("elbo_total at the prior") {
  // mu = 0, sigma = 1, Sigma = 0, posterior centring: KL and the regularizer vanish.
  const std::size_t n = 2, h = 3, p = 3;
  Rng rng(7);
  std::vector<Tensor> mus(p, Tensor::matrix(n, h)), ls(p, Tensor::matrix(n, h)), noise;
  for (std::size_t t = 0; t < p; ++t) noise.push_back(normal_matrix(rng, n, h));
  DecoderConfig cfg;
  cfg.mode = DecoderMode::Posterior;
  double expected = 0.0;
  for (std::size_t t = 1; t < p; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t d = 0; d < h; ++d) {
          double a = noise[t - 1](i, d), b = noise[t](j, d);
          expected -= -kLog2Pi - 0.5 * std::log(1.0 + cfg.guard) - (a * a + b * b) / (2.0 * (1.0 + cfg.guard));
        }
  CHECK(std::abs(elbo_value(mus, ls, Tensor::matrix(n, n), noise, cfg) - expected) < 1e-12);
}

TEST_CASE("elbo_total matches a hand expansion") {
  const std::size_t n = 2, h = 2, p = 2;
  for (DecoderMode mode : {DecoderMode::Posterior, DecoderMode::Standardized}) {
    Rng rng(8 + int(mode));
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> mus, ls, noise;
      for (std::size_t t = 0; t < p; ++t) {
        mus.push_back(random_matrix(rng, n, h, 0.0, 1.0));
        ls.push_back(random_matrix(rng, n, h, -0.5, 0.3));
        noise.push_back(normal_matrix(rng, n, h));
      }
      Tensor sigma = random_matrix(rng, n, n, -0.2, 0.2);
      DecoderConfig cfg;
      cfg.mode = mode;
      cfg.guard = 0.0;
      cfg.reg_weight = 0.01;

      // With two steps, standardizing maps each (node, dim) pair of means to -1 and +1.
      std::vector<Tensor> centre = mus;
      if (mode == DecoderMode::Standardized)
        for (std::size_t k = 0; k < n * h; ++k) {
          double sgn = mus[1][k] > mus[0][k] ? 1.0 : -1.0;
          centre[0][k] = -sgn;
          centre[1][k] = sgn;
        }
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t d = 0; d < h; ++d) {
            double si = std::exp(ls[0](i, d)), sj = std::exp(ls[1](j, d));
            double zi = centre[0](i, d) + si * noise[0](i, d), zj = centre[1](j, d) + sj * noise[1](j, d);
            double mi = mode == DecoderMode::Posterior ? mus[0](i, d) : 0.0;
            double mj = mode == DecoderMode::Posterior ? mus[1](j, d) : 0.0;
            loss -= mvn2_logpdf(zi, zj, mi, mj, si * si, sj * sj, sigma(i, j));
            loss += cfg.reg_weight * (ls[0](i, d) + ls[1](j, d));
          }
      for (std::size_t t = 0; t < p; ++t)
        for (std::size_t k = 0; k < n * h; ++k) {
          double s = std::exp(ls[t][k]);
          loss += std::log(1.0 / s) + (s * s + centre[t][k] * centre[t][k]) / 2.0 - 0.5;
        }
      CHECK(std::abs(elbo_value(mus, ls, sigma, noise, cfg) - loss) < 1e-10);
    }
  }
}

TEST_CASE("elbo_total interior steps carry KL weight 2") {
  const std::size_t n = 1, h = 1;
  std::vector<Tensor> mus(4, Tensor::matrix(n, h)), ls(4, Tensor::matrix(n, h)), noise(4, Tensor::matrix(n, h));
  DecoderConfig cfg;
  cfg.mode = DecoderMode::Posterior;
  cfg.reg_weight = 0.0;
  double base = elbo_value(mus, ls, Tensor::matrix(1, 1), noise, cfg);
  auto shifted = [&](std::size_t t) {
    auto m = mus;
    m[t](0, 0) = 1.0;  // adds 0.5 * weight to KL, the edge terms do not see mu in this mode
    return elbo_value(m, ls, Tensor::matrix(1, 1), noise, cfg) - base;
  };
  CHECK(shifted(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(shifted(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shifted(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shifted(3) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("elbo_total guard and contracts") {
  const std::size_t n = 2, h = 1;
  Rng rng(11);
  std::vector<Tensor> mus(2, Tensor::matrix(n, h)), ls, noise;
  for (int t = 0; t < 2; ++t) {
    ls.push_back(random_matrix(rng, n, h, -0.3, 0.3));
    noise.push_back(normal_matrix(rng, n, h));
  }
  // Sigma_ij = sigma_i sigma_j makes the pair covariance singular; the guard keeps it finite.
  Tensor sigma = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sigma(i, j) = std::exp(ls[0](i, 0)) * std::exp(ls[1](j, 0));
  DecoderConfig cfg;
  CHECK(std::isfinite(elbo_value(mus, ls, sigma, noise, cfg)));

  std::vector<Tensor> one(1, Tensor::matrix(n, h));
  CHECK_THROWS_AS(elbo_value(one, one, sigma, one, cfg), ContractError);
  CHECK_THROWS_AS(elbo_value(mus, ls, Tensor::matrix(3, 3), noise, cfg), DimensionError);
}

TEST_CASE("elbo_total gradients match finite differences in every mode") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    DecoderMode mode = seed % 2 ? DecoderMode::Posterior : DecoderMode::Standardized;
    auto inst = elbo_instance(seed, mode, seed % 3 == 0, seed % 4 == 1);
    CHECK(testutil::fd_relative_error(inst.program, inst.point) < 1e-4);
  }
}

TEST_CASE("causal scores rank a planted coupling above independent pairs") {
  const std::size_t n = 3, h = 8;
  Rng rng(12);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    LatentDistribution d{Tensor::matrix(n, h), Tensor::matrix(n, h)};
    Tensor zp = normal_matrix(rng, n, h), zc = normal_matrix(rng, n, h);
    for (std::size_t k = 0; k < h; ++k) zc(1, k) = 0.9 * zp(0, k) + std::sqrt(1.0 - 0.81) * rng.normal();
    Tensor sigma = Tensor::matrix(n, n);
    sigma(0, 1) = 0.9;
    LatentSample prev{zp, Tensor::matrix(n, h)}, curr{zc, Tensor::matrix(n, h)};
    Tensor s = causal_scores(prev, curr, d, d, sigma, kGuard);
    if (s(0, 1) > s(0, 2)) ++wins;
    Tensor c = coupling_scores(prev, curr, d, d, sigma, kGuard);
    CHECK(c(0, 2) == 0.0);
  }
  CHECK(wins >= 95);
}

TEST_CASE("causal scores are permutation-equivariant") {
  const std::size_t n = 5, h = 3;
  Rng rng(13);
  auto dp = random_dist(rng, n, h), dc = random_dist(rng, n, h);
  LatentSample sp = reparameterize(dp, normal_matrix(rng, n, h)), sc = reparameterize(dc, normal_matrix(rng, n, h));
  Tensor sigma = random_matrix(rng, n, n, -0.1, 0.1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  auto rows = [&](const Tensor& t) {
    Tensor o(t.shape());
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t c = 0; c < t.cols(); ++c) o(i, c) = t(perm[i], c);
    return o;
  };
  Tensor psig = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) psig(i, j) = sigma(perm[i], perm[j]);
  LatentDistribution pdp{rows(dp.mu), rows(dp.log_sigma)}, pdc{rows(dc.mu), rows(dc.log_sigma)};
  LatentSample psp{rows(sp.z), rows(sp.noise)}, psc{rows(sc.z), rows(sc.noise)};
  Tensor s = causal_scores(sp, sc, dp, dc, sigma, kGuard), ps = causal_scores(psp, psc, pdp, pdc, psig, kGuard);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(ps(i, j) - s(perm[i], perm[j])) < 1e-14);
}

TEST_CASE("transition graph is the normalized conditional density") {
  const std::size_t n = 3, h = 2;
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto dp = random_dist(rng, n, h), dc = random_dist(rng, n, h);
    LatentSample sp = reparameterize(dp, normal_matrix(rng, n, h));
    LatentSample sc = reparameterize(dc, normal_matrix(rng, n, h));
    Tensor sigma = random_matrix(rng, n, n, -0.1, 0.1);
    Tensor g = transition_graph(sp, sc, dp, dc, sigma, 0.0, nullptr);

    // Conditional of the second coordinate via the Schur complement of a dense covariance.
    Tensor logd = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < h; ++d) {
          double vi = std::exp(2 * dp.log_sigma(i, d)), vj = std::exp(2 * dc.log_sigma(j, d));
          Eigen::Matrix2d cov;
          cov << vi, sigma(i, j), sigma(i, j), vj;
          double mean = dc.mu(j, d) + cov(1, 0) / cov(0, 0) * (sp.z(i, d) - dp.mu(i, d));
          double var = cov(1, 1) - cov(1, 0) * cov(0, 1) / cov(0, 0);
          acc += normal_logpdf(sc.z(j, d), mean, var);
        }
        logd(i, j) = acc / h;
      }
    for (std::size_t i = 0; i < n; ++i) {
      double mx = std::max({logd(i, 0), logd(i, 1), logd(i, 2)});
      double rowmax = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(std::abs(g(i, j) - std::exp(logd(i, j) - mx)) < 1e-12);
        rowmax = std::max(rowmax, g(i, j));
      }
      CHECK(rowmax == 1.0);
    }

    Tensor mask = Tensor::from_rows({{1, 1, 0}, {0, 1, 0}, {1, 0, 1}});
    Tensor gm = transition_graph(sp, sc, dp, dc, sigma, kGuard, &mask);
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (mask[k] == 0.0) CHECK(gm[k] == 0.0);
      CHECK(gm[k] <= 1.0);
    }
  }
}

TEST_CASE("infer_window_graphs") {
  Rng rng(15);
  EncoderConfig ecfg{2, 6, 3};
  ParamStore store;
  init_encoder(store, ecfg, rng);
  store.add(dec_names::Sigma, random_matrix(rng, 4, 4, -0.1, 0.1));
  std::vector<Tensor> window;
  for (int t = 0; t < 5; ++t) window.push_back(random_matrix(rng, 4, 2, 0.0, 1.0));
  Tensor lap = normalize_laplacian(Tensor::matrix(4, 4, 1.0));
  Tensor mask = mask_pattern(Graph(Tensor::from_rows({{0, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 0, 1}, {0, 0, 1, 0}})));
  auto g = infer_window_graphs(window, lap, store, ecfg, DecoderConfig{}, &mask);
  CHECK(g.causal.size() == 4);
  CHECK(g.transition.size() == 4);
  CHECK(g.coupling.size() == 4);
  for (const auto& t : g.transition)
    for (std::size_t k = 0; k < t.size(); ++k)
      if (mask[k] == 0.0) CHECK(t[k] == 0.0);
  auto again = infer_window_graphs(window, lap, store, ecfg, DecoderConfig{}, &mask);
  CHECK(again.causal[2] == g.causal[2]);
  CHECK_THROWS_AS(infer_window_graphs(std::span(window).first(1), lap, store, ecfg, DecoderConfig{}, nullptr),
                  ContractError);
}
