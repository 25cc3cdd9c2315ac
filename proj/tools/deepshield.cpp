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

// deepshield command-line entry point: generate | blend | train | eval | viz.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "deepshield/config.hpp"
#include "deepshield/eval.hpp"
#include "deepshield/sam.hpp"
#include "deepshield/synthetic.hpp"
#include "deepshield/trainer.hpp"

namespace fs = std::filesystem;
using namespace deepshield;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
  cmd->add_option("--config", args.config, "JSON config file");
  cmd->add_option("--seed", args.seed, "Random seed (overrides trainer.seed)");
  auto* out = cmd->add_option("--out", args.out, "Output path");
  if (out_required) out->required();
  cmd->allow_extras();
}

// Leftover "--dotted.key value" or "--dotted.key=value" pairs become config overrides.
ConfigOverrides collect_overrides(const std::vector<std::string>& extras) {
  ConfigOverrides overrides;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    DS_CHECK(arg.rfind("--", 0) == 0 && arg.size() > 2, "usage", "unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      overrides.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      DS_CHECK(i + 1 < extras.size(), "usage", "missing value for '" + arg + "'");
      overrides.emplace_back(body, extras[++i]);
    }
  }
  return overrides;
}

Config resolve_config(const CommonArgs& args, const CLI::App* cmd) {
  ConfigOverrides overrides = collect_overrides(cmd->remaining());
  if (args.seed) overrides.emplace_back("trainer.seed", std::to_string(*args.seed));
  return args.config.empty() ? parse_config_text("", overrides) : parse_config(args.config, overrides);
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

const Video& find_video(const std::vector<Video>& videos, const std::string& id) {
  for (const auto& v : videos)
    if (v.record.video_id == id) return v;
  throw Error("not_found", "video '" + id + "' is not in the dataset");
}

std::vector<Video> load_videos(const std::string& root, const Config& config) {
  std::vector<Video> videos;
  for (const auto& r : load_dataset(root, {config.dataset.min_frames})) videos.push_back(load_video(r, config.image_size()));
  return videos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deepfake video detector: synthetic data, training, evaluation and visualization"};
  app.require_subcommand(1);

  CommonArgs gen_args, blend_args, train_args, eval_args, viz_args;

  auto* gen = app.add_subcommand("generate", "Write a synthetic face-video dataset");
  add_common(gen, gen_args, true);
  SyntheticSpec spec;
  bool force = false;
  gen->add_option("--real", spec.real, "Number of real videos");
  gen->add_option("--fake", spec.fake, "Number of SAM-blended fake videos");
  gen->add_option("--frames", spec.frames, "Frames per video");
  gen->add_option("--image-size", spec.image_size, "Frame side in pixels");
  gen->add_flag("--force", force, "Replace an existing output directory");

  auto* blend = app.add_subcommand("blend", "SAM-blend one clip of a real video");
  add_common(blend, blend_args, true);
  std::string blend_dataset, blend_video;
  int blend_start = 0;
  blend->add_option("--dataset", blend_dataset, "Dataset root")->required();
  blend->add_option("--video", blend_video, "Video id")->required();
  blend->add_option("--start", blend_start, "First frame of the clip");

  auto* train_cmd = app.add_subcommand("train", "Train a detector");
  add_common(train_cmd, train_args, false);
  std::string resume;
  std::optional<long> max_steps;
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_option("--max-steps", max_steps, "Stop after this many total steps");

  auto* eval_cmd = app.add_subcommand("eval", "Video-level AUC on a dataset");
  add_common(eval_cmd, eval_args, true);
  std::string eval_ckpt, eval_dataset;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset root")->required();

  auto* viz = app.add_subcommand("viz", "Patch-probability heatmaps for one clip");
  add_common(viz, viz_args, true);
  std::string viz_ckpt, viz_dataset, viz_video;
  int viz_start = 0;
  viz->add_option("--checkpoint", viz_ckpt, "Trained checkpoint")->required();
  viz->add_option("--dataset", viz_dataset, "Dataset root")->required();
  viz->add_option("--video", viz_video, "Video id")->required();
  viz->add_option("--start", viz_start, "First frame of the clip");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw Error("usage", e.what());
    }

    if (gen->parsed()) {
      const Config config = resolve_config(gen_args, gen);
      spec.sam = config.sam;
      const auto root = generate_synthetic_dataset(spec, gen_args.out, config.trainer.seed, force);
      print_json({{"dataset", root.string()}, {"videos", spec.real + spec.fake}});
    } else if (blend->parsed()) {
      const Config config = resolve_config(blend_args, blend);
      const auto videos = load_videos(blend_dataset, config);
      const Video& v = find_video(videos, blend_video);
      DS_CHECK(v.record.label == Label::Real, "invalid_argument", "blend needs a real video");
      Rng rng(config.trainer.seed);
      SamResult result = temporal_artifact_generate(extract_clip(v, blend_start, config.clip_len()),
                                                    extract_landmarks(v, blend_start, config.clip_len()), rng, config.sam);
      Video out;
      out.record.video_id = v.record.video_id + "_blend";
      out.record.label = Label::Fake;
      out.record.domain_tag = "sam-blend";
      out.frames = std::move(result.blended.frames);
      out.landmarks = extract_landmarks(v, blend_start, config.clip_len());
      out.masks = std::move(result.mask);
      write_video(out, blend_args.out);
      print_json({{"video", (fs::path(blend_args.out) / out.record.video_id).string()},
                  {"blend_ratio", result.mask_params.blend_ratio},
                  {"blur_kernel", result.mask_params.blur_kernel}});
    } else if (train_cmd->parsed()) {
      Config config = resolve_config(train_args, train_cmd);
      if (!train_args.out.empty()) config.trainer.out_dir = train_args.out;
      TrainOptions options;
      if (!resume.empty()) options.resume = resume;
      options.max_steps = max_steps;
      const auto ckpt = train(config, options);
      print_json({{"checkpoint", ckpt.string()}, {"out_dir", config.trainer.out_dir}});
    } else if (eval_cmd->parsed()) {
      const Config config = eval_args.config.empty() ? checkpoint_config(eval_ckpt) : resolve_config(eval_args, eval_cmd);
      const TrainingState state = load_checkpoint(eval_ckpt, config);
      const EvalReport report = evaluate(state.model, load_videos(eval_dataset, config), config.losses.theta);
      std::ofstream out(eval_args.out);
      DS_CHECK(out, "io", "cannot write '" + eval_args.out + "'");
      out << report.to_json() << '\n';
      print_json({{"auc", report.auc},
                  {"patch_auc", report.patch_auc ? nlohmann::json(*report.patch_auc) : nlohmann::json(nullptr)},
                  {"n_videos", report.per_video.size()},
                  {"metrics", eval_args.out}});
    } else if (viz->parsed()) {
      const Config config = viz_args.config.empty() ? checkpoint_config(viz_ckpt) : resolve_config(viz_args, viz);
      const TrainingState state = load_checkpoint(viz_ckpt, config);
      const auto videos = load_videos(viz_dataset, config);
      const VideoClip clip = extract_clip(find_video(videos, viz_video), viz_start, config.clip_len());
      const auto files =
          emit_patch_heatmap(state.model, clip, viz_args.out, {config.eval.colormap, config.eval.overlay_alpha});
      print_json({{"files", files.size()}, {"out_dir", viz_args.out}});
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", e.code()}, {"message", e.what()}}.dump() << '\n';
    return e.code() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
