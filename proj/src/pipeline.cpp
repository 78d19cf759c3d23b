#include "alignkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "alignkit/error.hpp"
#include "alignkit/parallel.hpp"

namespace alignkit::pipeline {

using dataset::SamplePair;

std::string_view ToString(Provenance provenance) {
  return provenance == Provenance::kPseudo ? "pseudo" : "ground_truth";
}

namespace {

instruction::ElementScores CategoriesOf(const std::vector<Prediction>& preds, HitMode mode) {
  instruction::ElementScores out;
  for (const auto& p : preds) out.emplace(*p.element_name, inference::PredictedCategory(p, mode));
  return out;
}

}  // namespace

std::vector<Prediction> PredictTotals(Backend& backend, const std::vector<SamplePair>& samples,
                                      const std::vector<instruction::ElementScores>& element_scores,
                                      const RunOptions& opts) {
  if (!element_scores.empty() && element_scores.size() != samples.size()) {
    throw ValidationError("element score list does not match the sample list");
  }
  std::vector<Prediction> out(samples.size());
  ParallelFor(samples.size(), opts.concurrency, [&](std::size_t i) {
    std::optional<instruction::ElementScores> scores;
    if (!element_scores.empty()) scores = element_scores[i];
    out[i] = inference::PredictTotalScore(backend, samples[i], scores, opts.build);
  });
  return out;
}

std::vector<Prediction> PredictElements(Backend& backend, const std::vector<SamplePair>& samples,
                                        const RunOptions& opts) {
  std::vector<std::vector<Prediction>> per_sample(samples.size());
  ParallelFor(samples.size(), opts.concurrency, [&](std::size_t i) {
    if (samples[i].elements.empty()) return;
    per_sample[i] = inference::PredictElementScores(backend, samples[i], opts.tau, opts.build,
                                                    opts.hit_mode);
  });
  std::vector<Prediction> out;
  for (auto& group : per_sample) {
    for (auto& p : group) out.push_back(std::move(p));
  }
  return out;
}

PseudoLabeledSet PseudoLabelValidation(Backend& total_backend, Backend* element_backend,
                                       const dataset::DatasetSplit& split,
                                       const RunOptions& opts) {
  if (split.validation.empty()) throw ValidationError("pseudo-labeling needs a non-empty validation split");
  if (opts.build.include_elements && element_backend == nullptr) {
    throw ValidationError("element augmentation during pseudo-labeling needs an element backend");
  }
  const auto& samples = split.validation;

  std::vector<std::vector<Prediction>> element_preds(samples.size());
  if (element_backend != nullptr) {
    ParallelFor(samples.size(), opts.concurrency, [&](std::size_t i) {
      if (samples[i].elements.empty()) return;
      element_preds[i] = inference::PredictElementScores(*element_backend, samples[i], opts.tau,
                                                         opts.build, opts.hit_mode);
    });
  }

  std::vector<instruction::ElementScores> injected;
  if (opts.build.include_elements) {
    for (const auto& preds : element_preds) injected.push_back(CategoriesOf(preds, opts.hit_mode));
  }
  const auto totals = PredictTotals(total_backend, samples, injected, opts);

  PseudoLabeledSet out;
  out.records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    SamplePair record = samples[i];
    record.total_score = totals[i].continuous_score;
    for (const auto& p : element_preds[i]) {
      for (auto& e : record.elements) {
        if (e.name == *p.element_name) {
          e.score = codec::CategoryToElementScore(inference::PredictedCategory(p, opts.hit_mode));
        }
      }
    }
    record.extra[std::string(kProvenanceKey)] = std::string(ToString(Provenance::kPseudo));
    out.records.push_back(std::move(record));
    out.provenance.push_back(Provenance::kPseudo);
  }
  return out;
}

dataset::DatasetSplit MergeTrainingSets(const std::vector<SamplePair>& train,
                                        const PseudoLabeledSet& pseudo) {
  dataset::DatasetSplit merged;
  merged.train.reserve(train.size() + pseudo.records.size());
  std::unordered_set<std::string> ids;
  for (const auto& s : train) {
    if (!ids.insert(s.sample_id).second) {
      throw ValidationError(fmt::format("sample_id collision: '{}'", s.sample_id));
    }
    SamplePair copy = s;
    copy.split = dataset::Split::kTrain;
    if (!copy.extra.contains(std::string(kProvenanceKey))) {
      copy.extra[std::string(kProvenanceKey)] = std::string(ToString(Provenance::kGroundTruth));
    }
    merged.train.push_back(std::move(copy));
  }
  for (std::size_t i = 0; i < pseudo.records.size(); ++i) {
    const auto& s = pseudo.records[i];
    if (!ids.insert(s.sample_id).second) {
      throw ValidationError(fmt::format("sample_id collision: '{}'", s.sample_id));
    }
    SamplePair copy = s;
    copy.split = dataset::Split::kTrain;
    const auto provenance = i < pseudo.provenance.size() ? pseudo.provenance[i] : Provenance::kPseudo;
    copy.extra[std::string(kProvenanceKey)] = std::string(ToString(provenance));
    merged.train.push_back(std::move(copy));
  }
  return merged;
}

TwoStageResult TwoStagePredict(Backend& element_backend, Backend& total_backend,
                               const std::vector<SamplePair>& samples, const RunOptions& opts) {
  std::vector<std::vector<Prediction>> per_sample(samples.size());
  ParallelFor(samples.size(), opts.concurrency, [&](std::size_t i) {
    if (samples[i].elements.empty()) return;
    per_sample[i] = inference::PredictElementScores(element_backend, samples[i], opts.tau,
                                                    opts.build, opts.hit_mode);
  });

  std::vector<instruction::ElementScores> injected;
  injected.reserve(samples.size());
  TwoStageResult result;
  for (auto& preds : per_sample) {
    injected.push_back(CategoriesOf(preds, opts.hit_mode));
    for (auto& p : preds) result.element_predictions.push_back(std::move(p));
  }

  RunOptions stage_two = opts;
  stage_two.build.include_elements = true;
  result.total_predictions = PredictTotals(total_backend, samples, injected, stage_two);
  return result;
}

// ---- ensembling ----

void EnsembleSpec::Validate() const {
  auto check = [](const char* task, std::size_t runs, const std::vector<double>& weights) {
    if (runs == 0) throw ValidationError(fmt::format("ensemble needs at least one {} run", task));
    if (weights.empty()) return;
    if (weights.size() != runs) {
      throw ValidationError(fmt::format("{} {} weights for {} runs", weights.size(), task, runs));
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ValidationError("ensemble weights must be nonnegative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError(fmt::format("{} weights sum to {}, not 1", task, sum));
    }
  };
  check("total", total_runs.size(), total_weights);
  check("element", element_runs.size(), element_weights);
}

EnsembleSpec LoadEnsembleSpec(const std::filesystem::path& path) {
  EnsembleSpec spec;
  try {
    const Json doc = Json::parse(ReadTextFile(path));
    const auto base = path.parent_path();
    auto paths = [&](const char* key) {
      std::vector<std::filesystem::path> out;
      if (!doc.contains(key)) return out;
      for (const auto& p : doc.at(key)) {
        std::filesystem::path run = p.get<std::string>();
        out.push_back(run.is_absolute() ? run : base / run);
      }
      return out;
    };
    spec.total_runs = paths("total_runs");
    spec.element_runs = paths("element_runs");
    if (doc.contains("total_weights")) spec.total_weights = doc.at("total_weights").get<std::vector<double>>();
    if (doc.contains("element_weights")) spec.element_weights = doc.at("element_weights").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed ensemble spec: {}", path.string(), e.what()));
  }
  spec.Validate();
  return spec;
}

namespace {

std::string PairKey(const Prediction& p) {
  return p.element_name ? p.sample_id + '\x1f' + *p.element_name : p.sample_id;
}

std::string Describe(const std::string& key) {
  const auto sep = key.find('\x1f');
  return sep == std::string::npos ? key : key.substr(0, sep) + "/" + key.substr(sep + 1);
}

std::vector<double> ResolveWeights(std::size_t runs, const std::vector<double>& weights) {
  if (runs == 0) throw ValidationError("ensemble over zero runs");
  if (weights.empty()) return std::vector<double>(runs, 1.0 / static_cast<double>(runs));
  if (weights.size() != runs) throw ValidationError("weight count does not match run count");
  return weights;
}

// Index of every run by key, after checking every run covers the same keys.
std::vector<std::unordered_map<std::string, const Prediction*>> IndexRuns(
    const std::vector<std::vector<Prediction>>& runs) {
  std::vector<std::unordered_map<std::string, const Prediction*>> index(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& p : runs[r]) {
      if (!index[r].emplace(PairKey(p), &p).second) {
        throw ValidationError(fmt::format("run {} repeats '{}'", r, Describe(PairKey(p))));
      }
    }
  }
  for (std::size_t r = 1; r < runs.size(); ++r) {
    std::set<std::string> only_first, only_other;
    for (const auto& [key, p] : index[0]) {
      if (!index[r].count(key)) only_first.insert(Describe(key));
    }
    for (const auto& [key, p] : index[r]) {
      if (!index[0].count(key)) only_other.insert(Describe(key));
    }
    if (!only_first.empty() || !only_other.empty()) {
      throw ValidationError(fmt::format(
          "runs 0 and {} cover different samples; only in run 0: [{}]; only in run {}: [{}]", r,
          fmt::join(only_first, ", "), r, fmt::join(only_other, ", ")));
    }
  }
  return index;
}

struct Combined {
  double score;
  codec::Distribution distribution;
};

Combined Combine(const std::vector<const Prediction*>& members, const std::vector<double>& weights) {
  double mean = 0.0;
  double lo = members.front()->continuous_score;
  double hi = lo;
  const std::size_t width = members.front()->distribution.probabilities.size();
  std::vector<double> mix(width, 0.0), pmin(width), pmax(width);
  for (std::size_t k = 0; k < width; ++k) {
    pmin[k] = pmax[k] = members.front()->distribution.probabilities[k];
  }
  for (std::size_t r = 0; r < members.size(); ++r) {
    const auto& m = *members[r];
    if (m.distribution.probabilities.size() != width) {
      throw ValidationError("ensemble members disagree on alphabet size");
    }
    mean += weights[r] * m.continuous_score;
    lo = std::min(lo, m.continuous_score);
    hi = std::max(hi, m.continuous_score);
    for (std::size_t k = 0; k < width; ++k) {
      const double p = m.distribution.probabilities[k];
      mix[k] += weights[r] * p;
      pmin[k] = std::min(pmin[k], p);
      pmax[k] = std::max(pmax[k], p);
    }
  }
  for (std::size_t k = 0; k < width; ++k) mix[k] = std::clamp(mix[k], pmin[k], pmax[k]);
  return {std::clamp(mean, lo, hi), codec::Distribution{std::move(mix)}};
}

template <typename Finish>
std::vector<Prediction> EnsembleRuns(const std::vector<std::vector<Prediction>>& runs,
                                     const std::vector<double>& weights, Finish finish) {
  const auto w = ResolveWeights(runs.size(), weights);
  const auto index = IndexRuns(runs);
  std::vector<Prediction> out;
  out.reserve(runs.front().size());
  for (const auto& first : runs.front()) {
    const std::string key = PairKey(first);
    std::vector<const Prediction*> members;
    members.reserve(runs.size());
    for (const auto& run_index : index) members.push_back(run_index.at(key));
    Combined c = Combine(members, w);
    Prediction p;
    p.sample_id = first.sample_id;
    p.task = first.task;
    p.element_name = first.element_name;
    p.continuous_score = c.score;
    p.distribution = std::move(c.distribution);
    finish(p, first);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<Prediction>> ReadRuns(const std::vector<std::filesystem::path>& paths,
                                              instruction::Task task) {
  std::vector<std::vector<Prediction>> runs;
  for (const auto& path : paths) {
    auto preds = inference::ReadPredictions(path);
    for (const auto& p : preds) {
      if (p.task != task) {
        throw ValidationError(fmt::format("{} holds a {} prediction where {} was expected",
                                          path.string(), instruction::ToString(p.task),
                                          instruction::ToString(task)));
      }
    }
    runs.push_back(std::move(preds));
  }
  return runs;
}

}  // namespace

std::vector<Prediction> EnsembleTotal(const std::vector<std::vector<Prediction>>& runs,
                                      const std::vector<double>& weights) {
  return EnsembleRuns(runs, weights, [](Prediction& p, const Prediction&) {
    p.argmax_label = instruction::AlphabetOf(p.task)[p.distribution.ArgMax()];
  });
}

std::vector<Prediction> EnsembleElements(const std::vector<std::vector<Prediction>>& runs,
                                         const std::vector<double>& weights, int tau) {
  return EnsembleRuns(runs, weights, [tau](Prediction& p, const Prediction&) {
    const auto category = codec::ElementCategory::FromDigit(
        static_cast<int>(codec::RoundHalfAway(p.continuous_score)));
    p.argmax_label = category.label();
    p.hit = codec::CategoryToHit(category, tau);
  });
}

std::vector<Prediction> EnsembleTotal(const EnsembleSpec& spec) {
  spec.Validate();
  return EnsembleTotal(ReadRuns(spec.total_runs, instruction::Task::kTotal), spec.total_weights);
}

std::vector<Prediction> EnsembleElements(const EnsembleSpec& spec, int tau) {
  spec.Validate();
  return EnsembleElements(ReadRuns(spec.element_runs, instruction::Task::kElement),
                          spec.element_weights, tau);
}

}  // namespace alignkit::pipeline
