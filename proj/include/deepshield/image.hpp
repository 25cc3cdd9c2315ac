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

#pragma once

#include <array>
#include <filesystem>

#include "deepshield/common.hpp"

namespace deepshield {

/// Single-channel float image, row-major (row = y).
using ImagePlane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB frame with values in [0, 1], stored as three planes.
struct Frame {
  std::array<ImagePlane, 3> channels;

  Frame() = default;
  Frame(int height, int width) {
    for (auto& c : channels) c = ImagePlane::Zero(height, width);
  }

  int height() const { return static_cast<int>(channels[0].rows()); }
  int width() const { return static_cast<int>(channels[0].cols()); }

  bool operator==(const Frame& other) const {
    if (height() != other.height() || width() != other.width()) return false;
    for (int c = 0; c < 3; ++c)
      if (!(channels[c] == other.channels[c]).all()) return false;
    return true;
  }
};

Frame read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Frame& frame);
ImagePlane read_png_gray(const std::filesystem::path& path);
/// Stores round(255 * v) per pixel.
void write_png_gray(const std::filesystem::path& path, const ImagePlane& plane);
/// Width and height from the PNG header without decoding pixels.
std::pair<int, int> png_size(const std::filesystem::path& path);

/// Snaps values to the 8-bit grid a PNG round trip would produce.
void quantize_8bit(Frame& frame);
Frame resize_bilinear(const Frame& frame, int height, int width);

/// Separable box blur with odd kernel size and edge replication.
ImagePlane box_blur(const ImagePlane& plane, int kernel);

}  // namespace deepshield
