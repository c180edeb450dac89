#include <doctest.h>

#include <cmath>

#include "dvgnn/errors.hpp"
#include "dvgnn/metrics.hpp"
#include "helpers.hpp"

using namespace dvgnn;

namespace {

// Every positive/negative pair, ties counted half.
double auc_brute(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t b = 0; b < s.size(); ++b)
      if (l[a] && !l[b]) {
        pairs += 1.0;
        wins += s[a] > s[b] ? 1.0 : s[a] == s[b] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

struct Labelled {
  std::vector<double> s;
  std::vector<int> l;
};

// Scores on a coarse grid so ties are common.
Labelled random_labelled(Rng& rng, std::size_t n) {
  Labelled out;
  for (std::size_t k = 0; k < n; ++k) {
    out.s.push_back(std::round(rng.uniform() * 10.0) / 10.0);
    out.l.push_back(rng.uniform() < 0.4 ? 1 : 0);
  }
  out.l[0] = 1;
  out.l[1] = 0;
  return out;
}

}  // namespace

TEST_CASE("rmse and mae") {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}}), b = Tensor::from_rows({{1, 0}, {3, 8}});
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(mae(a, b) == 1.5);
  CHECK_THROWS_AS(rmse(a, Tensor::matrix(1, 4)), DimensionError);
  CHECK_THROWS_AS(mae(Tensor::matrix(0, 0), Tensor::matrix(0, 0)), ContractError);
  // rmse >= mae always.
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    Tensor p = testutil::random_matrix(rng, 3, 4), t = testutil::random_matrix(rng, 3, 4);
    CHECK(rmse(p, t) >= mae(p, t) - 1e-15);
  }
}

TEST_CASE("precision and F1 examples") {
  std::vector<double> s = {0.9, 0.8, 0.3, 0.6, 0.1};
  std::vector<int> l = {1, 0, 1, 1, 0};
  auto r = precision_f1(s, l, 0.5);  // tp 2, fp 1, fn 1
  CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  CHECK_FALSE(r.no_positive_predictions);

  auto none = precision_f1(s, l, 1.0);
  CHECK(none.no_positive_predictions);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);

  CHECK(precision_f1(std::vector<double>{0.5}, std::vector<int>{1}, 0.5).precision == 1.0);  // >= threshold
  CHECK_THROWS_AS(precision_f1(s, l, 1.5), ContractError);
  CHECK_THROWS_AS(precision_f1(s, std::vector<int>{1}, 0.5), DimensionError);
}

TEST_CASE("AUC examples and contracts") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ContractError);

  // Matrix form ignores the diagonal.
  Tensor scores = Tensor::from_rows({{0.0, 0.9, 0.2}, {0.1, 100.0, 0.8}, {0.3, 0.4, -100.0}});
  Tensor truth = Tensor::from_rows({{0, 1, 0}, {0, 1, 1}, {0, 0, 1}});
  CHECK(roc_auc(scores, truth) == 1.0);
}

TEST_CASE("metrics agree with brute-force counting") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto d = random_labelled(rng, 2 + rng.index(40));
    CHECK(std::abs(roc_auc(d.s, d.l) - auc_brute(d.s, d.l)) < 1e-12);

    double th = rng.index(21) / 20.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < d.s.size(); ++k) {
      if (d.s[k] >= th && d.l[k]) ++tp;
      if (d.s[k] >= th && !d.l[k]) ++fp;
      if (d.s[k] < th && d.l[k]) ++fn;
    }
    auto r = precision_f1(d.s, d.l, th);
    double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    double rec = double(tp) / double(tp + fn);
    double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    CHECK(std::abs(r.precision - prec) < 1e-12);
    CHECK(std::abs(r.recall - rec) < 1e-12);
    CHECK(std::abs(r.f1 - f1) < 1e-12);
  }
}

TEST_CASE("AUC is invariant under increasing transforms") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto d = random_labelled(rng, 30);
    std::vector<double> t;
    for (double v : d.s) t.push_back(std::exp(3.0 * v) - 7.0);
    CHECK(roc_auc(t, d.l) == doctest::Approx(roc_auc(d.s, d.l)).epsilon(1e-14));
    std::vector<double> flipped;
    for (double v : d.s) flipped.push_back(-v);
    CHECK(roc_auc(flipped, d.l) == doctest::Approx(1.0 - roc_auc(d.s, d.l)).epsilon(1e-12));
  }
}

TEST_CASE("uninformative scores give AUC near one half") {
  Rng rng(4);
  double acc = 0.0;
  const int trials = 400;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> s;
    std::vector<int> l;
    for (int k = 0; k < 100; ++k) {
      s.push_back(rng.uniform());
      l.push_back(k % 4 == 0);
    }
    acc += roc_auc(s, l);
  }
  // Per-draw sd for 25 vs 75 is sqrt((n1 + n0 + 1) / (12 n1 n0)) ~ 0.067.
  CHECK(std::abs(acc / trials - 0.5) < 3.0 * 0.067 / std::sqrt(double(trials)));
}

TEST_CASE("minmax_scale") {
  Tensor s = Tensor::from_rows({{100, 2, 4}, {6, -50, 10}, {2, 2, 0}});
  Tensor m = minmax_scale(s);
  CHECK(m == Tensor::from_rows({{0, 0, 0.25}, {0.5, 0, 1}, {0, 0, 0}}));
  CHECK(minmax_scale(Tensor::matrix(3, 3, 4.0)) == Tensor::matrix(3, 3));
  Tensor d = minmax_scale(s, true);
  CHECK(d(0, 0) == 1.0);
  CHECK(d(1, 1) == 0.0);
  CHECK_THROWS_AS(minmax_scale(Tensor::matrix(2, 3)), DimensionError);
}

TEST_CASE("link_eval report") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto d = random_labelled(rng, 25);
    double th = rng.index(21) / 20.0;
    auto r = link_eval(d.s, d.l, th);
    CHECK(r.threshold == th);
    CHECK(r.auc == roc_auc(d.s, d.l));
    CHECK(r.f1 == precision_f1(d.s, d.l, th).f1);
    CHECK(r.curve.size() == 21);
    CHECK(r.best_f1 >= r.f1);
    double best = 0.0;
    for (std::size_t k = 0; k < r.curve.size(); ++k) {
      CHECK(r.curve[k].threshold == doctest::Approx(k * 0.05).epsilon(1e-15));
      best = std::max(best, r.curve[k].f1);
      if (k) CHECK(r.curve[k].fpr <= r.curve[k - 1].fpr);
    }
    CHECK(r.best_f1 == best);
    CHECK(r.curve.front().recall == 1.0);  // everything is predicted at threshold 0
    CHECK(r.curve.front().fpr == 1.0);
  }

  Tensor scores = Tensor::from_rows({{0, 1, 0.2}, {0.9, 0, 0.1}, {0.3, 0.4, 0}});
  EdgeSplit split;
  split.held_out_edges = {{0, 1}, {1, 0}};
  split.negative_samples = {{0, 2}, {2, 1}};
  auto r = link_eval(scores, split);
  CHECK(r.auc == 1.0);
  CHECK(r.precision == 1.0);
  CHECK(r.f1 == 1.0);
  Graph truth(Tensor::from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}));
  CHECK(link_eval(scores, truth).auc == 1.0);
}
