#include "alignkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "alignkit/error.hpp"

namespace alignkit::metrics {

namespace {

void CheckPair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("length mismatch: {} predictions vs {} labels", a.size(), b.size()));
  }
  if (a.size() < 2) throw ValidationError("correlation needs at least two points");
}

bool IsConstant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

std::vector<double> AverageRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share ranks i+1..j+1
    const double rank = (static_cast<double>(i + j) + 2.0) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double Plcc(std::span<const double> pred, std::span<const double> truth) {
  CheckPair(pred, truth);
  if (IsConstant(pred) || IsConstant(truth)) {
    throw ValidationError("correlation is undefined for a constant vector");
  }
  const double n = static_cast<double>(pred.size());
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mp;
    const double dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double Srcc(std::span<const double> pred, std::span<const double> truth) {
  CheckPair(pred, truth);
  if (IsConstant(pred) || IsConstant(truth)) {
    throw ValidationError("rank correlation is undefined for a constant vector");
  }
  const auto rp = AverageRanks(pred);
  const auto rt = AverageRanks(truth);
  return Plcc(rp, rt);
}

double ElementAccuracy(std::span<const int> pred_hits, std::span<const int> truth_hits) {
  if (pred_hits.size() != truth_hits.size()) {
    throw ValidationError(fmt::format("length mismatch: {} predicted hits vs {} labels",
                                      pred_hits.size(), truth_hits.size()));
  }
  if (pred_hits.empty()) throw ValidationError("accuracy over zero elements");
  std::size_t equal = 0;
  for (std::size_t i = 0; i < pred_hits.size(); ++i) equal += pred_hits[i] == truth_hits[i];
  return static_cast<double>(equal) / static_cast<double>(pred_hits.size());
}

double MainScore(double srcc, double plcc, double acc) { return plcc / 4 + srcc / 4 + acc / 2; }

ThresholdResult OptimalThresholdSearch(std::span<const double> pred_scores,
                                       std::span<const int> truth_hits, double step) {
  if (pred_scores.empty()) throw ValidationError("threshold search over empty input");
  if (pred_scores.size() != truth_hits.size()) throw ValidationError("threshold search length mismatch");
  if (!(step > 0.0)) throw ValidationError("threshold step must be positive");

  const auto [lo_it, hi_it] = std::minmax_element(pred_scores.begin(), pred_scores.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = (hi - lo) / step;
  if (span > 1e8) throw ValidationError("threshold grid too fine for the score range");
  const auto steps = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;

  // Sweep the grid upwards over scores sorted ascending; `below` counts
  // points with score <= t, split by label.
  std::vector<std::size_t> order(pred_scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pred_scores[a] < pred_scores[b]; });
  std::size_t positives = 0;
  for (int h : truth_hits) positives += h != 0;
  const std::size_t n = pred_scores.size();

  std::size_t cursor = 0, neg_below = 0, pos_below = 0;
  ThresholdResult best{lo - step, -1.0};
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = lo + (static_cast<double>(k) - 1.0) * step;
    while (cursor < n && pred_scores[order[cursor]] <= t) {
      (truth_hits[order[cursor]] != 0 ? pos_below : neg_below) += 1;
      ++cursor;
    }
    const double acc = static_cast<double>(neg_below + (positives - pos_below)) / static_cast<double>(n);
    if (acc > best.accuracy) best = {t, acc};
  }
  return best;
}

MetricsReport MakeReport(double srcc, double plcc, double acc, std::size_t n_samples,
                         std::size_t n_elements) {
  MetricsReport r;
  r.srcc = srcc;
  r.plcc = plcc;
  r.acc = acc;
  r.main_score = MainScore(srcc, plcc, acc);
  r.n_samples = n_samples;
  r.n_elements = n_elements;
  return r;
}

MetricsReport Evaluate(const dataset::DatasetSplit& truth,
                       const std::vector<inference::Prediction>& total_predictions,
                       const std::vector<inference::Prediction>& element_predictions, int tau,
                       inference::HitMode mode) {
  std::unordered_map<std::string, const dataset::SamplePair*> by_id;
  for (dataset::Split which :
       {dataset::Split::kTrain, dataset::Split::kValidation, dataset::Split::kTest}) {
    for (const auto& s : truth.Of(which)) by_id.emplace(s.sample_id, &s);
  }
  auto lookup = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError(fmt::format("prediction for unknown sample '{}'", id));
    return it->second;
  };

  std::vector<double> pred, label;
  for (const auto& p : total_predictions) {
    const auto* s = lookup(p.sample_id);
    if (!s->total_score) throw ValidationError(fmt::format("sample '{}' has no total_score", p.sample_id));
    pred.push_back(p.continuous_score);
    label.push_back(*s->total_score);
  }

  std::vector<int> pred_hits, truth_hits;
  for (const auto& p : element_predictions) {
    const auto* s = lookup(p.sample_id);
    const auto* e = p.element_name ? s->FindElement(*p.element_name) : nullptr;
    if (e == nullptr) {
      throw ValidationError(fmt::format("sample '{}' has no element '{}'", p.sample_id,
                                        p.element_name.value_or("")));
    }
    const auto hit = dataset::ElementHit(*e, tau);
    if (!hit) {
      throw ValidationError(fmt::format("element '{}' of '{}' is unlabeled", e->name, p.sample_id));
    }
    pred_hits.push_back(inference::PredictionHit(p, tau, mode) ? 1 : 0);
    truth_hits.push_back(*hit ? 1 : 0);
  }

  return MakeReport(Srcc(pred, label), Plcc(pred, label), ElementAccuracy(pred_hits, truth_hits),
                    pred.size(), pred_hits.size());
}

Json ReportToJson(const MetricsReport& r) {
  Json out = Json::object();
  out["srcc"] = r.srcc;
  out["plcc"] = r.plcc;
  out["acc"] = r.acc;
  out["main_score"] = r.main_score;
  out["n_samples"] = r.n_samples;
  out["n_elements"] = r.n_elements;
  return out;
}

std::string FormatReportTable(const MetricsReport& r) {
  std::string out;
  out += fmt::format("{:<12}{:>10}\n", "metric", "value");
  out += fmt::format("{:<12}{:>10.4f}\n", "SRCC", r.srcc);
  out += fmt::format("{:<12}{:>10.4f}\n", "PLCC", r.plcc);
  out += fmt::format("{:<12}{:>10.4f}\n", "ACC", r.acc);
  out += fmt::format("{:<12}{:>10.4f}\n", "Main Score", r.main_score);
  out += fmt::format("{:<12}{:>10}\n", "samples", r.n_samples);
  out += fmt::format("{:<12}{:>10}\n", "elements", r.n_elements);
  return out;
}

}  // namespace alignkit::metrics
