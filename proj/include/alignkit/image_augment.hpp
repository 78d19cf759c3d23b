#pragma once

// Label-preserving image augmentations (lighting, grid distortion, crop) and
// the materialization of an augmented training subset.

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "alignkit/dataset.hpp"
#include "alignkit/image.hpp"

namespace alignkit::augment {

enum class Kind { kBrightness, kGrid, kCrop };

std::string_view ToString(Kind kind);

struct ParameterRange {
  double lo;
  double hi;
};

// Sampling ranges of the lighting factor, grid distortion strength and crop
// fraction respectively.
ParameterRange RangeOf(Kind kind);

inline constexpr int kDefaultGridCells = 4;
inline constexpr double kDefaultSubsetFraction = 0.10;

struct AugmentationSpec {
  Kind kind = Kind::kBrightness;
  double parameter = 0.0;
  int sign = 1;  // brightness only: +1 brightens, -1 darkens
  std::uint64_t seed = 0;
  int grid_cells = kDefaultGridCells;

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

// v -> clamp(round(v * (1 + sign*alpha)), 0, 255) on every sample.
image::ImageBuffer BrightnessAdjust(const image::ImageBuffer& img, double alpha, int sign);

// Displaces the interior points of a (grid_cells+1)^2 lattice by up to
// beta*cell/2 per axis and warps each cell bilinearly. Border points stay put.
image::ImageBuffer GridDistort(const image::ImageBuffer& img, double beta, int grid_cells,
                               std::uint64_t seed);

// Sub-rectangle of round(W*(1-gamma)) x round(H*(1-gamma)) at a seeded offset.
image::ImageBuffer RandomCrop(const image::ImageBuffer& img, double gamma, std::uint64_t seed);

image::ImageBuffer Apply(const image::ImageBuffer& img, const AugmentationSpec& spec);

struct PlannedAugmentation {
  std::size_t source_index = 0;  // into the train list
  AugmentationSpec spec;
};

// Picks floor(fraction*|train|) train samples without replacement and draws
// one transform per pick. Throws ValidationError unless 0 < fraction <= 1.
std::vector<PlannedAugmentation> PlanAugmentation(const std::vector<dataset::SamplePair>& train,
                                                  double fraction, std::uint64_t seed);

// "dir/name.jpg" -> "dir/name-aug.png"
std::string AugmentedImageRef(std::string_view image_ref);

struct AugmentResult {
  std::vector<dataset::SamplePair> augmented;
  std::vector<dataset::SamplePair> final_train;  // train followed by augmented
  std::vector<PlannedAugmentation> plan;
};

// Reads each selected image from image_root/image_ref, writes the augmented
// PNG next to it and emits a new sample carrying the source labels.
AugmentResult AugmentSubset(const dataset::DatasetSplit& split, double fraction,
                            std::uint64_t seed, const std::filesystem::path& image_root,
                            int concurrency = 1);

}  // namespace alignkit::augment
