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

#include "deepshield/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace deepshield {

namespace {
constexpr char kMagic[8] = {'D', 'S', 'H', 'I', 'E', 'L', 'D', '1'};
}

const Matrix<float>* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  using nlohmann::json;
  json header;
  header["format"] = "deepshield-checkpoint";
  header["format_version"] = kCheckpointFormatVersion;
  header["dtype"] = "f32";
  header["meta"] = json::parse(archive.meta_json);
  json list = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : archive.tensors) {
    list.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(float);
  }
  header["tensors"] = std::move(list);
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    DS_CHECK(out, "io", "cannot write checkpoint '" + tmp.string() + "'");
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : archive.tensors)
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    DS_CHECK(out.good(), "io", "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  DS_CHECK(in, "io", "cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  DS_CHECK(in && std::memcmp(magic, kMagic, sizeof(magic)) == 0, "bad_checkpoint",
           "'" + path.string() + "' is not a deepshield checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  DS_CHECK(in && len < (1ull << 32), "bad_checkpoint", "corrupt header length in '" + path.string() + "'");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  DS_CHECK(in, "bad_checkpoint", "truncated header in '" + path.string() + "'");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("bad_checkpoint", "corrupt header in '" + path.string() + "': " + e.what());
  }
  DS_CHECK(header.value("format_version", 0) == kCheckpointFormatVersion, "bad_checkpoint",
           "unsupported checkpoint version in '" + path.string() + "'");
  DS_CHECK(header.value("dtype", "") == "f32", "bad_checkpoint", "unsupported dtype in '" + path.string() + "'");
  const std::streamoff payload = in.tellg();
  TensorArchive archive;
  archive.meta_json = header.value("meta", json::object()).dump();
  for (const auto& t : header["tensors"]) {
    const auto rows = t["rows"].get<Eigen::Index>(), cols = t["cols"].get<Eigen::Index>();
    Matrix<float> m(rows, cols);
    in.seekg(payload + static_cast<std::streamoff>(t["offset"].get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    DS_CHECK(in, "bad_checkpoint", "truncated tensor '" + t["name"].get<std::string>() + "'");
    archive.add(t["name"].get<std::string>(), std::move(m));
  }
  return archive;
}

}  // namespace deepshield
