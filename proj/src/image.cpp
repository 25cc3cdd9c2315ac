// Copyright 2026 The DeepShield Authors. All Rights Reserved.
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

#include "deepshield/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace deepshield {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

png_image begin_read(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error("io", "cannot read PNG '" + path.string() + "': " + image.message);
  }
  return image;
}

}  // namespace

std::pair<int, int> png_size(const std::filesystem::path& path) {
  png_image image = begin_read(path);
  const auto size = std::make_pair(static_cast<int>(image.width), static_cast<int>(image.height));
  png_image_free(&image);
  return size;
}

Frame read_png_rgb(const std::filesystem::path& path) {
  png_image image = begin_read(path);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw Error("io", "cannot decode PNG '" + path.string() + "': " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Frame frame(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        frame.channels[c](y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return frame;
}

ImagePlane read_png_gray(const std::filesystem::path& path) {
  png_image image = begin_read(path);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw Error("io", "cannot decode PNG '" + path.string() + "': " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  ImagePlane plane(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) plane(y, x) = buffer[static_cast<std::size_t>(y) * w + x] / 255.0f;
  return plane;
}

void write_png_rgb(const std::filesystem::path& path, const Frame& frame) {
  const int h = frame.height(), w = frame.width();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(frame.channels[c](y, x));
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("io", "cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void write_png_gray(const std::filesystem::path& path, const ImagePlane& plane) {
  const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) buffer[static_cast<std::size_t>(y) * w + x] = to_byte(plane(y, x));
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("io", "cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void quantize_8bit(Frame& frame) {
  for (auto& c : frame.channels)
    c = c.unaryExpr([](float v) { return to_byte(v) / 255.0f; });
}

Frame resize_bilinear(const Frame& frame, int height, int width) {
  if (frame.height() == height && frame.width() == width) return frame;
  Frame out(height, width);
  const float sy = static_cast<float>(frame.height()) / height;
  const float sx = static_cast<float>(frame.width()) / width;
  for (int y = 0; y < height; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(frame.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, frame.height() - 1);
    const float wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(frame.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, frame.width() - 1);
      const float wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const auto& p = frame.channels[c];
        out.channels[c](y, x) = (1 - wy) * ((1 - wx) * p(y0, x0) + wx * p(y0, x1)) +
                                wy * ((1 - wx) * p(y1, x0) + wx * p(y1, x1));
      }
    }
  }
  return out;
}

ImagePlane box_blur(const ImagePlane& plane, int kernel) {
  DS_CHECK(kernel >= 1 && kernel % 2 == 1, "invalid_argument", "box blur kernel must be odd and >= 1");
  if (kernel == 1) return plane;
  const int r = kernel / 2;
  const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
  const float area = static_cast<float>(kernel * kernel);
  ImagePlane tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int k = -r; k <= r; ++k) s += plane(y, std::clamp(x + k, 0, w - 1));
      tmp(y, x) = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int k = -r; k <= r; ++k) s += tmp(std::clamp(y + k, 0, h - 1), x);
      out(y, x) = s / area;
    }
  }
  return out;
}

}  // namespace deepshield
