#include "dvgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvgnn/errors.hpp"

namespace dvgnn {
namespace {

void same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.empty()) throw ContractError(std::string(op) + ": empty input");
}

void flatten_pairs(const Tensor& scores, const Tensor& truth, bool diag, std::vector<double>& s,
                   std::vector<int>& l) {
  same_shape("link metrics", scores, truth);
  for (std::size_t i = 0; i < scores.rows(); ++i)
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      if (i == j && !diag) continue;
      s.push_back(scores(i, j));
      l.push_back(truth(i, j) > 0.0 ? 1 : 0);
    }
}

}  // namespace

double rmse(const Tensor& pred, const Tensor& truth) {
  same_shape("rmse", pred, truth);
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mae(const Tensor& pred, const Tensor& truth) {
  same_shape("mae", pred, truth);
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += std::abs(pred[k] - truth[k]);
  return acc / static_cast<double>(pred.size());
}

PrecisionF1 precision_f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw DimensionError("precision_f1: scores and labels differ in length");
  if (threshold < 0.0 || threshold > 1.0) throw ContractError("precision_f1: threshold must be in [0, 1]");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    bool pred = scores[k] >= threshold;
    if (pred && labels[k]) ++tp;
    else if (pred) ++fp;
    else if (labels[k]) ++fn;
  }
  PrecisionF1 r;
  r.no_positive_predictions = tp + fp == 0;
  r.precision = r.no_positive_predictions ? 0.0 : static_cast<double>(tp) / (tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  std::size_t denom = 2 * tp + fp + fn;
  r.f1 = denom == 0 ? 0.0 : 2.0 * tp / static_cast<double>(denom);
  return r;
}

PrecisionF1 precision_f1(const Tensor& scores, const Tensor& truth, double threshold, bool include_diagonal) {
  std::vector<double> s;
  std::vector<int> l;
  flatten_pairs(scores, truth, include_diagonal, s, l);
  return precision_f1(s, l, threshold);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  std::size_t n = scores.size();
  std::size_t pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int v) { return v != 0; }));
  std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw ContractError("roc_auc: need at least one positive and one negative");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps tied midranks integral.
  double rank2_pos = 0.0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && scores[order[e]] == scores[order[k]]) ++e;
    double mid2 = static_cast<double>(k + 1 + e);
    for (std::size_t m = k; m < e; ++m)
      if (labels[order[m]]) rank2_pos += mid2;
    k = e;
  }
  double u = rank2_pos / 2.0 - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double roc_auc(const Tensor& scores, const Tensor& truth, bool include_diagonal) {
  std::vector<double> s;
  std::vector<int> l;
  flatten_pairs(scores, truth, include_diagonal, s, l);
  return roc_auc(s, l);
}

Tensor minmax_scale(const Tensor& scores, bool include_diagonal) {
  if (scores.rank() != 2 || scores.rows() != scores.cols())
    throw DimensionError("minmax_scale: " + shape_str(scores.shape()));
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < scores.rows(); ++i)
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      if (i == j && !include_diagonal) continue;
      lo = std::min(lo, scores(i, j));
      hi = std::max(hi, scores(i, j));
    }
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < scores.rows(); ++i)
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      if (i == j && !include_diagonal) continue;
      out(i, j) = hi > lo ? (scores(i, j) - lo) / (hi - lo) : 0.0;
    }
  return out;
}

LinkEvalReport link_eval(std::span<const double> scores, std::span<const int> labels, double threshold) {
  LinkEvalReport r;
  r.auc = roc_auc(scores, labels);
  auto at = precision_f1(scores, labels, threshold);
  r.threshold = threshold;
  r.precision = at.precision;
  r.f1 = at.f1;
  r.no_positive_predictions = at.no_positive_predictions;
  std::size_t neg = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
  r.best_f1 = -1.0;
  for (int k = 0; k <= 20; ++k) {
    double th = k / 20.0;
    auto pf = precision_f1(scores, labels, th);
    std::size_t fp = 0;
    for (std::size_t m = 0; m < scores.size(); ++m)
      if (!labels[m] && scores[m] >= th) ++fp;
    r.curve.push_back({th, pf.precision, pf.recall, pf.f1, neg ? static_cast<double>(fp) / neg : 0.0});
    if (pf.f1 > r.best_f1) {
      r.best_f1 = pf.f1;
      r.best_threshold = th;
    }
  }
  return r;
}

LinkEvalReport link_eval(const Tensor& scaled_scores, const Graph& truth, double threshold, bool include_diagonal) {
  std::vector<double> s;
  std::vector<int> l;
  flatten_pairs(scaled_scores, truth.adjacency(), include_diagonal, s, l);
  return link_eval(s, l, threshold);
}

LinkEvalReport link_eval(const Tensor& scaled_scores, const EdgeSplit& split, double threshold) {
  std::vector<double> s;
  std::vector<int> l;
  for (auto [i, j] : split.held_out_edges) {
    s.push_back(scaled_scores(i, j));
    l.push_back(1);
  }
  for (auto [i, j] : split.negative_samples) {
    s.push_back(scaled_scores(i, j));
    l.push_back(0);
  }
  return link_eval(s, l, threshold);
}

}  // namespace dvgnn
