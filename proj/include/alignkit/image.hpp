#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace alignkit::image {

// Interleaved 8-bit RGB, row-major.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int width, int height, std::uint8_t fill = 0);
  ImageBuffer(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// PNG or JPEG. Throws IoError on unreadable or undecodable files.
ImageBuffer ReadImage(const std::filesystem::path& path);
// Always PNG. Throws IoError on failure.
void WritePng(const ImageBuffer& image, const std::filesystem::path& path);

}  // namespace alignkit::image
