#include "cadtwin/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include <png.h>

#include "binary_io.hpp"
#include "cadtwin/error.hpp"

namespace cadtwin {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": invalid PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int file_channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(static_cast<std::size_t>(png_get_rowbytes(png, info)) * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * png_get_rowbytes(png, info);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const int channels = file_channels >= 3 ? 3 : 1;
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = rows[y][x * file_channels + c] / 255.0;
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ArgumentError("write_png: only 1 or 3 channels supported");
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_raw(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("CTRW", 4);
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(image.width));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(image.height));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(image.channels));
  std::vector<float> values(image.data.begin(), image.data.end());
  detail::put_array(out, values.data(), values.size());
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "CTRW") throw FormatError(path.string() + ": not a raw image dump");
  if (detail::get<std::uint32_t>(in) != 1) throw FormatError(path.string() + ": unsupported raw version");
  const auto w = detail::get<std::uint32_t>(in);
  const auto h = detail::get<std::uint32_t>(in);
  const auto c = detail::get<std::uint32_t>(in);
  if (w > 65536 || h > 65536 || c > 16) throw FormatError(path.string() + ": corrupt raw header");
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  std::vector<float> values(img.data.size());
  detail::get_array(in, values.data(), values.size());
  std::copy(values.begin(), values.end(), img.data.begin());
  return img;
}

}  // namespace cadtwin
