#include "alignkit/score_codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "alignkit/error.hpp"

namespace alignkit::codec {

long RoundHalfAway(double x) { return std::lround(x); }

RatingLevel RatingLevel::FromIndex(int index) {
  if (index < 1 || index > kRatingLevels) {
    throw ValidationError(fmt::format("rating index {} outside 1..15", index));
  }
  return RatingLevel(index);
}

RatingLevel RatingLevel::FromLetter(char letter) {
  const auto pos = kRatingAlphabet.find(letter);
  if (pos == std::string_view::npos) {
    throw ValidationError(fmt::format("'{}' is not a rating letter", letter));
  }
  return RatingLevel(static_cast<int>(pos) + 1);
}

ElementCategory ElementCategory::FromDigit(int digit) {
  if (digit < 1 || digit > kElementCategories) {
    throw ValidationError(fmt::format("element category {} outside 1..7", digit));
  }
  return ElementCategory(digit);
}

ElementCategory ElementCategory::FromLabel(char label) {
  if (label < '1' || label > '7') {
    throw ValidationError(fmt::format("'{}' is not an element category", label));
  }
  return ElementCategory(label - '0');
}

std::size_t Distribution::ArgMax() const {
  return static_cast<std::size_t>(
      std::max_element(probabilities.begin(), probabilities.end()) -
      probabilities.begin());
}

RatingLevel EncodeTotalScore(double score) {
  if (!(score >= 1.0 && score <= 5.0)) {
    throw ValidationError(fmt::format("total score {} outside [1,5]", score));
  }
  // (s-1)/4*14+1 evaluated as (s-1)*14/4 keeps exact quarters exact.
  const double scaled = (score - 1.0) * 14.0 / 4.0 + 1.0;
  return RatingLevel::FromIndex(static_cast<int>(RoundHalfAway(scaled)));
}

double IndexToScore(double index) { return 1.0 + (index - 1.0) * 4.0 / 14.0; }

double DecodeLevel(RatingLevel level) { return IndexToScore(level.index()); }

ElementCategory EncodeElementScore(double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError(fmt::format("element score {} outside [0,1]", score));
  }
  return ElementCategory::FromDigit(static_cast<int>(RoundHalfAway(score * 6.0)) + 1);
}

double CategoryToElementScore(ElementCategory category) {
  return (category.digit() - 1) / 6.0;
}

bool CategoryToHit(ElementCategory category, int tau) {
  return category.digit() > tau;
}

Distribution ClosedSetSoftmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax over an empty alphabet");
  double peak = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) throw ValidationError("non-finite logit");
    peak = std::max(peak, x);
  }
  Distribution out;
  out.probabilities.reserve(logits.size());
  double total = 0.0;
  for (double x : logits) {
    const double e = std::exp(x - peak);
    out.probabilities.push_back(e);
    total += e;
  }
  for (double& p : out.probabilities) p /= total;
  return out;
}

double ExpectedIndex(const Distribution& dist) {
  double e = 0.0;
  for (std::size_t i = 0; i < dist.probabilities.size(); ++i) {
    e += dist.probabilities[i] * static_cast<double>(i + 1);
  }
  return e;
}

namespace {

void RequireSize(std::span<const double> logits, int expected) {
  if (logits.size() != static_cast<std::size_t>(expected)) {
    throw ValidationError(fmt::format("expected {} logits, got {}", expected,
                                      logits.size()));
  }
}

}  // namespace

double ExpectedTotalScore(std::span<const double> logits) {
  RequireSize(logits, kRatingLevels);
  const double index = std::clamp(ExpectedIndex(ClosedSetSoftmax(logits)), 1.0,
                                  static_cast<double>(kRatingLevels));
  return IndexToScore(index);
}

double ExpectedElementCategory(std::span<const double> logits) {
  RequireSize(logits, kElementCategories);
  return std::clamp(ExpectedIndex(ClosedSetSoftmax(logits)), 1.0,
                    static_cast<double>(kElementCategories));
}

}  // namespace alignkit::codec
