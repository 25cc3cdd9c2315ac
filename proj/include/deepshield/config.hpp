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

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deepshield/backbone.hpp"
#include "deepshield/dfa.hpp"
#include "deepshield/losses.hpp"
#include "deepshield/sam.hpp"

namespace deepshield {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSection {
  std::string root;
  std::string test_root;
  int min_frames = kMinVideoFrames;
};

struct EncoderSection {
  /// "full" (ViT-B/16) or "toy"; explicit encoder keys override the preset.
  std::string preset = "full";
  EncoderConfig model = EncoderConfig::full();
};

struct LossSection {
  int theta = 10;
  double omega = 0.5;
  double upsilon = 0.5;
  double tau = 0.07;
  SupConDenominator denominator = SupConDenominator::Paper;
  bool supcon_normalize = true;

  LossWeights weights() const { return {omega, upsilon, tau}; }
  SupConOptions supcon() const { return {tau, denominator, supcon_normalize}; }
};

struct TrainerSection {
  int epochs = 80;
  /// 0 derives ceil(|dataset| / batch_videos).
  int iters_per_epoch = 0;
  /// Source videos per batch: half real, half fake-source.
  int batch_videos = 8;
  /// Clip starts drawn per sampled video; clips_per_iteration of them enter the batch.
  int clips_per_video = 4;
  int clips_per_iteration = 1;
  double learning_rate = 3e-4;
  double weight_decay = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string schedule = "cosine";
  std::uint64_t seed = 0;
  /// Probability a fake slot is a SAM blend when native fakes exist.
  double sam_fake_prob = 0.5;
  int max_sam_retries = 8;
  std::string out_dir = "runs/deepshield";
  std::string metrics_file = "metrics.jsonl";
};

struct EvalSection {
  std::string colormap = "jet";
  double overlay_alpha = 0.5;
};

struct Config {
  int schema_version = kConfigSchemaVersion;
  DatasetSection dataset;
  SamConfig sam;
  EncoderSection encoder;
  DfaConfig dfa;
  LossSection losses;
  TrainerSection trainer;
  EvalSection eval;

  int clip_len() const { return encoder.model.num_frames; }
  int image_size() const { return encoder.model.image_size; }
  int pairs_per_batch() const { return trainer.batch_videos / 2; }
  bool operator==(const Config& other) const;
};

/// "dotted.key" -> raw value text; values are parsed as JSON when possible, else as strings.
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then the JSON document in `text`, then overrides. Throws unknown_key, type_mismatch,
/// out_of_range or parse_error with the offending key path.
Config parse_config_text(const std::string& text, const ConfigOverrides& overrides = {});
Config parse_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Fully resolved config as pretty JSON; parse_config_text(to_json(c)) == c.
std::string config_to_json(const Config& config);
void write_config(const std::filesystem::path& path, const Config& config);

/// Range and consistency checks; called by the parsers.
void validate_config(const Config& config);

/// Every accepted dotted key, in schema order.
std::vector<std::string> config_keys();

}  // namespace deepshield
