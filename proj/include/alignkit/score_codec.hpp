#pragma once

// Conversions between continuous alignment scores, the discrete label
// alphabets used as fine-tuning targets, and closed-set backend logits.
//
// Total scores in [1,5] map linearly onto 15 rating letters a..o; element
// scores in [0,1] map onto 7 digit categories 1..7. At inference time a
// backend's logits over one of these alphabets are turned into a continuous
// score by softmax expectation.

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace alignkit::codec {

inline constexpr int kRatingLevels = 15;
inline constexpr int kElementCategories = 7;
inline constexpr int kDefaultHitThreshold = 3;

inline constexpr std::string_view kRatingAlphabet = "abcdefghijklmno";
inline constexpr std::string_view kElementAlphabet = "1234567";

// Half-away-from-zero rounding shared by both codecs.
long RoundHalfAway(double x);

class RatingLevel {
 public:
  // index in 1..15; throws ValidationError otherwise.
  static RatingLevel FromIndex(int index);
  // letter in a..o; throws ValidationError otherwise.
  static RatingLevel FromLetter(char letter);

  int index() const { return index_; }
  char letter() const { return kRatingAlphabet[index_ - 1]; }

  friend bool operator==(RatingLevel, RatingLevel) = default;

 private:
  explicit RatingLevel(int index) : index_(index) {}
  int index_;
};

class ElementCategory {
 public:
  static ElementCategory FromDigit(int digit);
  static ElementCategory FromLabel(char label);

  int digit() const { return digit_; }
  char label() const { return static_cast<char>('0' + digit_); }

  friend bool operator==(ElementCategory, ElementCategory) = default;

 private:
  explicit ElementCategory(int digit) : digit_(digit) {}
  int digit_;
};

// Probabilities over a closed alphabet; nonnegative, summing to 1.
struct Distribution {
  std::vector<double> probabilities;

  std::size_t ArgMax() const;
};

RatingLevel EncodeTotalScore(double score);
double DecodeLevel(RatingLevel level);
// Continuous index in [1,15] back onto [1,5].
double IndexToScore(double index);

ElementCategory EncodeElementScore(double score);
// Inverse of EncodeElementScore on category centres: (digit - 1) / 6.
double CategoryToElementScore(ElementCategory category);

bool CategoryToHit(ElementCategory category, int tau = kDefaultHitThreshold);

// Max-subtracted softmax. Throws ValidationError on empty or non-finite input.
Distribution ClosedSetSoftmax(std::span<const double> logits);

// Sum_i p_i * i over 1-based indices.
double ExpectedIndex(const Distribution& dist);

// Expects 15 logits; returns a score in [1,5].
double ExpectedTotalScore(std::span<const double> logits);
// Expects 7 logits; returns a category expectation in [1,7].
double ExpectedElementCategory(std::span<const double> logits);

}  // namespace alignkit::codec
