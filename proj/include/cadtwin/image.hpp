#pragma once

#include <filesystem>
#include <vector>

namespace cadtwin {

// Interleaved row-major image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

// 8-bit PNG; gray, gray+alpha, RGB and RGBA are accepted on read and mapped to
// [0, 1]. Alpha is dropped. Values are clamped and rounded on write.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// Raw float32 dump: "CTRW", then uint32 version (1), width, height, channels,
// all little-endian, followed by width*height*channels float32 values in
// row-major interleaved order.
void write_raw(const std::filesystem::path& path, const Image& image);
Image read_raw(const std::filesystem::path& path);

}  // namespace cadtwin
