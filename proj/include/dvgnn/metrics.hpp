#pragma once

#include <span>
#include <vector>

#include "dvgnn/graphs.hpp"
#include "dvgnn/tensor.hpp"

namespace dvgnn {

double rmse(const Tensor& pred, const Tensor& truth);
double mae(const Tensor& pred, const Tensor& truth);

struct PrecisionF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when nothing scored at or above the threshold; precision is then 0.
  bool no_positive_predictions = false;
};

// Predicted positive when score >= threshold.
PrecisionF1 precision_f1(std::span<const double> scores, std::span<const int> labels, double threshold);
// Over off-diagonal directed pairs unless include_diagonal is set.
PrecisionF1 precision_f1(const Tensor& scores, const Tensor& truth, double threshold, bool include_diagonal = false);

// Mann-Whitney statistic with ties counted half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
double roc_auc(const Tensor& scores, const Tensor& truth, bool include_diagonal = false);

// Affine map of the entries onto [0, 1]; a constant matrix maps to 0.
// The diagonal is ignored for the range and zeroed unless include_diagonal.
Tensor minmax_scale(const Tensor& scores, bool include_diagonal = false);

struct CurvePoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
};

struct LinkEvalReport {
  double auc = 0.0;
  double threshold = 0.5;  // operating point for precision and f1
  double precision = 0.0;
  double f1 = 0.0;
  bool no_positive_predictions = false;
  double best_f1 = 0.0;
  double best_threshold = 0.0;
  std::vector<CurvePoint> curve;  // thresholds 0, 0.05, ..., 1
};

// Generic form over labelled pairs; scores already in [0, 1].
LinkEvalReport link_eval(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
// Full off-diagonal matrix against a truth graph.
LinkEvalReport link_eval(const Tensor& scaled_scores, const Graph& truth, double threshold = 0.5,
                         bool include_diagonal = false);
// Held-out edges against sampled negatives.
LinkEvalReport link_eval(const Tensor& scaled_scores, const EdgeSplit& split, double threshold = 0.5);

}  // namespace dvgnn
