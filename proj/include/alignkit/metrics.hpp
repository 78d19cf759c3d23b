#pragma once

#include <span>
#include <string>
#include <vector>

#include "alignkit/dataset.hpp"
#include "alignkit/inference.hpp"
#include "alignkit/jsonl.hpp"

namespace alignkit::metrics {

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> AverageRanks(std::span<const double> values);

// Pearson product-moment correlation. Throws ValidationError on length
// mismatch, fewer than two points, or a constant vector.
double Plcc(std::span<const double> pred, std::span<const double> truth);

// Pearson correlation of average ranks; same error contract as Plcc.
double Srcc(std::span<const double> pred, std::span<const double> truth);

// Fraction of equal positions. Throws on mismatch or empty input.
double ElementAccuracy(std::span<const int> pred_hits, std::span<const int> truth_hits);

// PLCC/4 + SRCC/4 + ACC/2
double MainScore(double srcc, double plcc, double acc);

struct ThresholdResult {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Scans t_k = min(pred) - step + k*step while t_k <= max(pred) and keeps the
// threshold maximizing the accuracy of 1[pred > t]; ties go to the smallest
// threshold.
ThresholdResult OptimalThresholdSearch(std::span<const double> pred_scores,
                                       std::span<const int> truth_hits, double step = 0.01);

struct MetricsReport {
  double srcc = 0.0;
  double plcc = 0.0;
  double acc = 0.0;
  double main_score = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_elements = 0;
};

MetricsReport MakeReport(double srcc, double plcc, double acc, std::size_t n_samples,
                         std::size_t n_elements);

// Scores total predictions against labeled total_score and element
// predictions against hits derived from element scores, pooled over all
// (sample, element) pairs.
MetricsReport Evaluate(const dataset::DatasetSplit& truth,
                       const std::vector<inference::Prediction>& total_predictions,
                       const std::vector<inference::Prediction>& element_predictions, int tau,
                       inference::HitMode mode);

Json ReportToJson(const MetricsReport& report);
std::string FormatReportTable(const MetricsReport& report);

}  // namespace alignkit::metrics
