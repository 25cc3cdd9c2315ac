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

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "deepshield/synthetic.hpp"
#include "deepshield/trainer.hpp"
#include "test_support.hpp"

namespace deepshield {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.real = 3;
  s.fake = 3;
  s.frames = 48;
  s.image_size = 32;
  return s;
}

TEST(Synthetic, RenderedVideoIsWellFormed) {
  Rng rng(1);
  const Video v = render_face_video("x", 10, 48, rng);
  ASSERT_EQ(v.frame_count(), 10);
  ASSERT_EQ(v.landmarks.size(), 10u);
  for (int t = 0; t < 10; ++t) {
    EXPECT_EQ(v.frames[t].height(), 48);
    for (const auto& ch : v.frames[t].channels) {
      EXPECT_GE(ch.minCoeff(), 0.0f);
      EXPECT_LE(ch.maxCoeff(), 1.0f);
    }
    for (const auto& p : v.landmarks[t].points) {
      EXPECT_GE(p.x(), 0.0f);
      EXPECT_LE(p.x(), 47.0f);
      EXPECT_GE(p.y(), 0.0f);
      EXPECT_LE(p.y(), 47.0f);
    }
  }
  EXPECT_FALSE(v.frames[0] == v.frames[9]);  // the head moves
  EXPECT_THROW(render_face_video("x", 0, 48, rng), Error);
}

TEST(Synthetic, FakesCarryNonzeroMasks) {
  const auto videos = generate_synthetic_videos(small_spec(), 2);
  ASSERT_EQ(videos.size(), 6u);
  int fakes = 0;
  for (const auto& v : videos) {
    if (v.record.label == Label::Fake) {
      ++fakes;
      EXPECT_EQ(v.record.domain_tag, "synthetic-sam");
      ASSERT_EQ(v.masks.size(), 48u);
      EXPECT_FALSE(mask_is_zero(v.masks));
    } else {
      EXPECT_TRUE(v.masks.empty());
    }
  }
  EXPECT_EQ(fakes, 3);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const auto a = generate_synthetic_videos(small_spec(), 9);
  const auto b = generate_synthetic_videos(small_spec(), 9);
  const auto c = generate_synthetic_videos(small_spec(), 10);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int t = 0; t < 48; ++t) EXPECT_TRUE(a[i].frames[t] == b[i].frames[t]);
  EXPECT_FALSE(a[0].frames[0] == c[0].frames[0]);
}

TEST(Synthetic, DatasetLoadsAndTrainsOneStep) {
  TempDir dir("synth");
  const auto root = generate_synthetic_dataset(small_spec(), dir.path() / "ds", 4);
  const auto records = load_dataset(root);
  ASSERT_EQ(records.size(), 6u);
  for (const auto& r : records)
    EXPECT_EQ(r.mask_paths.empty(), r.label == Label::Real) << r.video_id;

  const auto videos = generate_synthetic_videos(small_spec(), 4);
  const Video back = load_video(records.front(), 32);
  EXPECT_EQ(back.record.video_id, videos.front().record.video_id);
  for (int t = 0; t < 48; ++t) {
    EXPECT_TRUE(back.frames[t] == videos.front().frames[t]);
    EXPECT_TRUE(back.masks[t].isApprox(videos.front().masks[t], 1e-6f));
  }

  try {
    generate_synthetic_dataset(small_spec(), dir.path() / "ds", 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "out_dir_exists");
  }
  EXPECT_NO_THROW(generate_synthetic_dataset(small_spec(), dir.path() / "ds", 4, true));

  Config config;
  config.encoder.preset = "toy";
  config.encoder.model = testing::tiny_encoder();
  config.encoder.model.image_size = 32;
  config.dataset.root = root.string();
  config.trainer.epochs = 1;
  config.trainer.iters_per_epoch = 1;
  config.trainer.out_dir = (dir.path() / "run").string();
  const auto ckpt = train(config);
  EXPECT_TRUE(fs::exists(ckpt));
}

// ---------------------------------------------------------------------------
// Command line

struct CliResult {
  int status = -1;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + DEEPSHIELD_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

class Cli : public ::testing::Test {
 protected:
  TempDir dir{"cli"};
  fs::path p(const std::string& name) const { return dir.path() / name; }
};

TEST_F(Cli, GenerateWritesADataset) {
  const auto r = run_cli("generate --out " + p("ds").string() + " --real 2 --fake 2 --frames 48 --image-size 32 --seed 3",
                         dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["videos"], 4);
  EXPECT_EQ(load_dataset(p("ds")).size(), 4u);

  const auto again = run_cli("generate --out " + p("ds").string() + " --real 2 --fake 2", dir.path());
  EXPECT_EQ(again.status, 1);
  EXPECT_EQ(nlohmann::json::parse(again.err)["error"], "out_dir_exists");
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  auto r = run_cli("", dir.path());
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "usage");
  r = run_cli("train --bogus", dir.path());
  EXPECT_EQ(r.status, 2);
  r = run_cli("eval --out x.json", dir.path());  // missing --checkpoint and --dataset
  EXPECT_EQ(r.status, 2);
}

TEST_F(Cli, ConfigErrorsAreMachineReadable) {
  std::ofstream(p("bad.json")) << R"({"losses": {"theta": -1}})";
  const auto r = run_cli("train --config " + p("bad.json").string(), dir.path());
  EXPECT_EQ(r.status, 1);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err["error"], "out_of_range");
  EXPECT_NE(err["message"].get<std::string>().find("losses.theta"), std::string::npos);

  const auto unknown = run_cli("train --losses.nope 3", dir.path());
  EXPECT_EQ(unknown.status, 1);
  EXPECT_EQ(nlohmann::json::parse(unknown.err)["error"], "unknown_key");
}

TEST_F(Cli, TrainEvalVizBlendRoundTrip) {
  ASSERT_EQ(run_cli("generate --out " + p("ds").string() + " --real 2 --fake 2 --frames 48 --image-size 32", dir.path())
                .status,
            0);
  const std::string geometry =
      " --encoder.preset toy --encoder.image_size 32 --encoder.embed_dim 16 --encoder.depth 1 --encoder.num_heads 2"
      " --encoder.adapter_width 8 --encoder.num_frames 3 --trainer.epochs 1 --trainer.iters_per_epoch 2";
  auto r = run_cli("train --out " + p("run").string() + " --dataset.root " + p("ds").string() + geometry + " --seed 7",
                   dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  const fs::path ckpt = nlohmann::json::parse(r.out)["checkpoint"].get<std::string>();
  EXPECT_EQ(ckpt.filename(), "epoch_001.ckpt");
  EXPECT_EQ(checkpoint_config(ckpt).trainer.seed, 7u);

  r = run_cli("eval --checkpoint " + ckpt.string() + " --dataset " + p("ds").string() + " --out " +
                  p("eval.json").string(),
              dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  std::ifstream in(p("eval.json"));
  const auto report = nlohmann::json::parse(in);
  EXPECT_EQ(report["n_videos"], 4);
  EXPECT_GE(report["auc"].get<double>(), 0.0);
  EXPECT_LE(report["auc"].get<double>(), 1.0);

  r = run_cli("viz --checkpoint " + ckpt.string() + " --dataset " + p("ds").string() + " --video real_000 --start 5 --out " +
                  p("viz").string(),
              dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(p("viz") / "frame_0002.png"));
  EXPECT_TRUE(fs::exists(p("viz") / "patch_probs.json"));

  r = run_cli("viz --checkpoint " + ckpt.string() + " --dataset " + p("ds").string() + " --video nope --out " +
                  p("viz2").string(),
              dir.path());
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "not_found");

  r = run_cli("blend --dataset " + p("ds").string() + " --video real_001 --start 3 --out " + p("blend").string() +
                  " --encoder.preset toy --encoder.num_frames 6 --encoder.image_size 32",
              dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(p("blend") / "real_001_blend" / "meta.json"));
}

}  // namespace
}  // namespace deepshield
