// Copyright 2026 The deepmpc-vtr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "vtr/common.hpp"
#include "vtr/tensor.hpp"

namespace vtr {

/// Three-channel planar (CHW) image with values in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : height_(height),
        width_(width),
        values_(static_cast<std::size_t>(kChannels) * height * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  /// Number of scalar values, 3 * height * width.
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float& at(int c, int r, int col) {
    return values_[(static_cast<std::size_t>(c) * height_ + r) * width_ + col];
  }
  float at(int c, int r, int col) const {
    return values_[(static_cast<std::size_t>(c) * height_ + r) * width_ + col];
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

inline void require_same_shape(const Image& a, const Image& b,
                               std::string_view what) {
  if (!a.same_shape(b)) {
    raise<ShapeError>(what, ": image shapes differ (", a.height(), "x",
                      a.width(), " vs ", b.height(), "x", b.width(), ")");
  }
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Left-right mirror image.
inline Image mirror_horizontal(const Image& img) {
  Image out(img.height(), img.width());
  for (int ch = 0; ch < Image::kChannels; ++ch)
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) out.at(ch, r, c) = img.at(ch, r, img.width() - 1 - c);
  return out;
}

/// Rounds every value to the nearest multiple of 1/255, as an 8-bit camera
/// would. Quantized images survive a PNG round trip bit-exactly.
inline Image quantize_8bit(Image img) {
  for (float& v : img.values()) v = from_byte(to_byte(v));
  return img;
}

inline std::uint64_t checksum(const Image& img) {
  return fnv1a(img.values().data(), img.values().size_bytes());
}

/// Packs images into an (N, 3, H, W) tensor.
template <typename T>
Tensor<T> to_tensor(std::span<const Image* const> images) {
  if (images.empty()) return {};
  const int h = images[0]->height();
  const int w = images[0]->width();
  Tensor<T> out(static_cast<int>(images.size()), Image::kChannels, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(*images[0], *images[i], "to_tensor");
    auto src = images[i]->values();
    std::transform(src.begin(), src.end(),
                   out.sample(static_cast<int>(i)).begin(),
                   [](float v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  const Image* p = &image;
  return to_tensor<T>(std::span<const Image* const>(&p, 1));
}

/// Extracts batch entry `i` of a 3-channel tensor, clamping into [0, 1].
template <typename T>
Image to_image(const Tensor<T>& t, int i = 0) {
  if (t.c() != Image::kChannels) raise<ShapeError>("to_image: need 3 channels");
  Image img(t.h(), t.w());
  auto src = t.sample(i);
  std::transform(src.begin(), src.end(), img.values().begin(), [](T v) {
    return std::clamp(static_cast<float>(v), 0.0f, 1.0f);
  });
  return img;
}

// ---------------------------------------------------------------------------
// PNG I/O (8-bit RGB).

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Writes an interleaved 8-bit RGB buffer.
inline void write_png_rgb8(const std::filesystem::path& path, int width,
                           int height, std::span<const std::uint8_t> rgb) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) raise<IoError>("cannot open ", path.string(), " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    raise<IoError>("libpng init failed for ", path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise<IoError>("libpng write failed for ", path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or text chunks, so identical pixels give identical bytes.
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() +
                                             static_cast<std::size_t>(r) *
                                                 width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads any PNG, converted to interleaved 8-bit RGB.
inline std::vector<std::uint8_t> read_png_rgb8(
    const std::filesystem::path& path, int& width, int& height) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) raise<IoError>("cannot open ", path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise<IoError>("libpng init failed for ", path.string());
  }
  std::vector<std::uint8_t> rgb;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise<IoError>("malformed PNG ", path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  rgb.resize(static_cast<std::size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) {
    rows[r] = rgb.data() + static_cast<std::size_t>(r) * width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return rgb;
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h) * w * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        rgb[(static_cast<std::size_t>(r) * w + c) * 3 + ch] =
            to_byte(img.at(ch, r, c));
      }
    }
  }
  write_png_rgb8(path, w, h, rgb);
}

inline Image load_png(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto rgb = read_png_rgb8(path, w, h);
  Image img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        img.at(ch, r, c) =
            from_byte(rgb[(static_cast<std::size_t>(r) * w + c) * 3 + ch]);
      }
    }
  }
  return img;
}

}  // namespace vtr
