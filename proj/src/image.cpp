#include "alignkit/image.hpp"

#include <cstring>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "alignkit/error.hpp"

namespace alignkit::image {

ImageBuffer::ImageBuffer(int width, int height, std::uint8_t fill)
    : width_(width),
      height_(height),
      pixels_(static_cast<std::size_t>(width) * height * kChannels, fill) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * height * kChannels) {
    throw ValidationError("pixel buffer size does not match width*height*3");
  }
}

ImageBuffer ReadImage(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read or decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  ImageBuffer out(rgb.cols, rgb.rows);
  const std::size_t row_bytes = static_cast<std::size_t>(rgb.cols) * ImageBuffer::kChannels;
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(out.pixels().data() + y * row_bytes, rgb.ptr<std::uint8_t>(y), row_bytes);
  }
  return out;
}

void WritePng(const ImageBuffer& image, const std::filesystem::path& path) {
  if (image.empty()) throw ValidationError("refusing to write an empty image");
  cv::Mat rgb(image.height(), image.width(), CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

}  // namespace alignkit::image
