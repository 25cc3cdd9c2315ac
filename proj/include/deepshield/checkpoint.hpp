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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deepshield/common.hpp"

namespace deepshield {

/// Named float32 tensors plus a free-form JSON metadata string.
///
/// On-disk layout (little-endian):
///   8 bytes   magic "DSHIELD1"
///   u64       header length in bytes
///   header    JSON: {"format": "deepshield-checkpoint", "format_version": 1, "dtype": "f32",
///                    "tensors": [{"name", "rows", "cols", "offset"}...], "meta": {...}}
///   payload   row-major float32 data; offsets are relative to the payload start
struct TensorArchive {
  std::string meta_json = "{}";
  std::vector<std::pair<std::string, Matrix<float>>> tensors;

  const Matrix<float>* find(const std::string& name) const;
  void add(std::string name, Matrix<float> value) { tensors.emplace_back(std::move(name), std::move(value)); }
};

inline constexpr int kCheckpointFormatVersion = 1;

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace deepshield
