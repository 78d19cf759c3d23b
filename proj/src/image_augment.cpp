#include "alignkit/image_augment.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "alignkit/error.hpp"
#include "alignkit/parallel.hpp"
#include "alignkit/random.hpp"

namespace alignkit::augment {

using image::ImageBuffer;

std::string_view ToString(Kind kind) {
  switch (kind) {
    case Kind::kBrightness: return "brightness";
    case Kind::kGrid: return "grid";
    case Kind::kCrop: return "crop";
  }
  return "brightness";
}

ParameterRange RangeOf(Kind kind) {
  switch (kind) {
    case Kind::kBrightness: return {0.1, 0.5};
    case Kind::kGrid: return {0.2, 0.8};
    case Kind::kCrop: return {0.1, 0.5};
  }
  return {0.0, 0.0};
}

ImageBuffer BrightnessAdjust(const ImageBuffer& img, double alpha, int sign) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError(fmt::format("brightness alpha {} outside [0,1]", alpha));
  }
  if (sign != 1 && sign != -1) throw ValidationError("brightness sign must be +1 or -1");
  const double factor = 1.0 + sign * alpha;
  ImageBuffer out = img;
  for (auto& v : out.pixels()) {
    v = static_cast<std::uint8_t>(std::clamp<double>(std::round(v * factor), 0.0, 255.0));
  }
  return out;
}

namespace {

// Bilinear sample with coordinates clamped to the image.
std::uint8_t Sample(const ImageBuffer& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
  return static_cast<std::uint8_t>(
      std::clamp(std::round(top * (1.0 - fy) + bottom * fy), 0.0, 255.0));
}

struct Point {
  double x;
  double y;
};

}  // namespace

ImageBuffer GridDistort(const ImageBuffer& img, double beta, int grid_cells, std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ValidationError(fmt::format("grid beta {} outside [0,1]", beta));
  }
  if (grid_cells < 2) throw ValidationError("grid_cells must be at least 2");
  if (img.width() < grid_cells || img.height() < grid_cells) {
    throw ValidationError(fmt::format("image {}x{} smaller than {} grid cells", img.width(),
                                      img.height(), grid_cells));
  }

  // Lattice spans pixel centres 0..W-1 and 0..H-1.
  const double cell_w = static_cast<double>(img.width() - 1) / grid_cells;
  const double cell_h = static_cast<double>(img.height() - 1) / grid_cells;
  const int n = grid_cells + 1;
  std::vector<Point> lattice(static_cast<std::size_t>(n) * n);
  Rng rng(seed);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      Point p{i * cell_w, j * cell_h};
      if (i > 0 && i < grid_cells && j > 0 && j < grid_cells) {
        p.x += rng.Uniform(-0.5, 0.5) * beta * cell_w;
        p.y += rng.Uniform(-0.5, 0.5) * beta * cell_h;
      }
      lattice[static_cast<std::size_t>(j) * n + i] = p;
    }
  }
  auto node = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * n + i]; };

  ImageBuffer out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    const double gy = cell_h > 0 ? y / cell_h : 0.0;
    const int cj = std::min(static_cast<int>(gy), grid_cells - 1);
    const double v = gy - cj;
    for (int x = 0; x < img.width(); ++x) {
      const double gx = cell_w > 0 ? x / cell_w : 0.0;
      const int ci = std::min(static_cast<int>(gx), grid_cells - 1);
      const double u = gx - ci;
      const Point p00 = node(ci, cj), p10 = node(ci + 1, cj);
      const Point p01 = node(ci, cj + 1), p11 = node(ci + 1, cj + 1);
      const double sx = (1 - u) * (1 - v) * p00.x + u * (1 - v) * p10.x +
                        (1 - u) * v * p01.x + u * v * p11.x;
      const double sy = (1 - u) * (1 - v) * p00.y + u * (1 - v) * p10.y +
                        (1 - u) * v * p01.y + u * v * p11.y;
      for (int c = 0; c < ImageBuffer::kChannels; ++c) out.at(x, y, c) = Sample(img, sx, sy, c);
    }
  }
  return out;
}

ImageBuffer RandomCrop(const ImageBuffer& img, double gamma, std::uint64_t seed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ValidationError(fmt::format("crop gamma {} outside [0,1)", gamma));
  }
  const int w = static_cast<int>(std::lround(img.width() * (1.0 - gamma)));
  const int h = static_cast<int>(std::lround(img.height() * (1.0 - gamma)));
  if (w < 1 || h < 1) {
    throw ValidationError(fmt::format("crop of {}x{} with gamma {} is empty", img.width(),
                                      img.height(), gamma));
  }
  Rng rng(seed);
  const int dx = static_cast<int>(rng.Below(static_cast<std::uint64_t>(img.width() - w) + 1));
  const int dy = static_cast<int>(rng.Below(static_cast<std::uint64_t>(img.height() - h) + 1));
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ImageBuffer::kChannels; ++c) out.at(x, y, c) = img.at(x + dx, y + dy, c);
    }
  }
  return out;
}

ImageBuffer Apply(const ImageBuffer& img, const AugmentationSpec& spec) {
  switch (spec.kind) {
    case Kind::kBrightness: return BrightnessAdjust(img, spec.parameter, spec.sign);
    case Kind::kGrid: return GridDistort(img, spec.parameter, spec.grid_cells, spec.seed);
    case Kind::kCrop: return RandomCrop(img, spec.parameter, spec.seed);
  }
  return img;
}

std::vector<PlannedAugmentation> PlanAugmentation(const std::vector<dataset::SamplePair>& train,
                                                  double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError(fmt::format("augmentation fraction {} outside (0,1]", fraction));
  }
  const auto count = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(train.size()) + 1e-9));

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng selector(seed);
  selector.Shuffle(order);
  order.resize(count);
  std::sort(order.begin(), order.end());

  std::vector<PlannedAugmentation> plan;
  plan.reserve(count);
  for (std::size_t index : order) {
    // Per-sample stream: the draw depends only on (seed, sample_id).
    Rng rng(DeriveSeed(seed, train[index].sample_id));
    PlannedAugmentation p;
    p.source_index = index;
    p.spec.kind = static_cast<Kind>(rng.Below(3));
    const auto range = RangeOf(p.spec.kind);
    p.spec.parameter = rng.Uniform(range.lo, range.hi);
    p.spec.sign = rng.Coin() ? 1 : -1;
    p.spec.seed = rng.NextU64();
    plan.push_back(p);
  }
  return plan;
}

std::string AugmentedImageRef(std::string_view image_ref) {
  std::filesystem::path p{std::string(image_ref)};
  const std::string stem = p.stem().string() + "-aug.png";
  return (p.parent_path() / stem).generic_string();
}

AugmentResult AugmentSubset(const dataset::DatasetSplit& split, double fraction,
                            std::uint64_t seed, const std::filesystem::path& image_root,
                            int concurrency) {
  AugmentResult result;
  result.plan = PlanAugmentation(split.train, fraction, seed);

  std::unordered_set<std::string> ids;
  for (dataset::Split which :
       {dataset::Split::kTrain, dataset::Split::kValidation, dataset::Split::kTest}) {
    for (const auto& s : split.Of(which)) ids.insert(s.sample_id);
  }

  result.augmented.reserve(result.plan.size());
  for (const auto& p : result.plan) {
    const auto& source = split.train[p.source_index];
    dataset::SamplePair copy = source;
    copy.sample_id = source.sample_id + "-aug";
    copy.image_ref = AugmentedImageRef(source.image_ref);
    if (!ids.insert(copy.sample_id).second) {
      throw ValidationError(fmt::format("augmented id '{}' already exists", copy.sample_id));
    }
    Json info = Json::object();
    info["source_sample_id"] = source.sample_id;
    info["kind"] = ToString(p.spec.kind);
    info["parameter"] = p.spec.parameter;
    if (p.spec.kind == Kind::kBrightness) info["sign"] = p.spec.sign;
    copy.extra["augmentation"] = std::move(info);
    result.augmented.push_back(std::move(copy));
  }

  ParallelFor(result.plan.size(), concurrency, [&](std::size_t i) {
    const auto& p = result.plan[i];
    const auto& source = split.train[p.source_index];
    const auto img = image::ReadImage(image_root / source.image_ref);
    image::WritePng(Apply(img, p.spec), image_root / result.augmented[i].image_ref);
  });

  result.final_train = split.train;
  result.final_train.insert(result.final_train.end(), result.augmented.begin(),
                            result.augmented.end());
  return result;
}

}  // namespace alignkit::augment
