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

#include "deepshield/synthetic.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace deepshield {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kRealStream = 0x5245414c;
constexpr std::uint32_t kFakeStream = 0x46414b45;
constexpr std::uint32_t kSamStream = 0x53414d31;

Rng stream(std::uint64_t seed, std::uint32_t tag, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

float quantize(float v) { return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f; }
float round_milli(float v) { return std::round(v * 1000.0f) / 1000.0f; }

// Coverage of an axis-aligned ellipse at normalized offset (du, dv), antialiased over ~1 px.
float ellipse_cover(float du, float dv, float ru, float rv, float px_radius) {
  const float rho = std::sqrt((du / ru) * (du / ru) + (dv / rv) * (dv / rv));
  return std::clamp((1.0f - rho) * px_radius + 0.5f, 0.0f, 1.0f);
}

struct Appearance {
  Eigen::Vector3f bg_a, bg_b, skin, eye, lips;
  float bg_angle, stripe_freq, stripe_angle, stripe_amp;
  float axis_u, axis_v;
  Eigen::Vector2f center;
  float amp_x, amp_y, period_x, period_y, phase_x, phase_y;
  float rot_amp, rot_period, rot_phase, scale_amp, scale_period;
  float mouth_period;
  std::array<Eigen::Vector3f, 3> texture;  // (freq_u, freq_v, phase)
  float noise;
};

Appearance sample_appearance(int size, Rng& rng) {
  std::uniform_real_distribution<float> u01(0.0f, 1.0f);
  auto uni = [&](float lo, float hi) { return lo + (hi - lo) * u01(rng); };
  const float s = static_cast<float>(size);
  Appearance a;
  a.bg_a = {uni(0.1f, 0.9f), uni(0.1f, 0.9f), uni(0.1f, 0.9f)};
  a.bg_b = {uni(0.1f, 0.9f), uni(0.1f, 0.9f), uni(0.1f, 0.9f)};
  a.bg_angle = uni(0, 2 * std::numbers::pi_v<float>);
  a.stripe_freq = uni(2, 5);
  a.stripe_angle = uni(0, std::numbers::pi_v<float>);
  a.stripe_amp = uni(0.02f, 0.08f);
  const float r = uni(0.55f, 0.9f);
  a.skin = {r, r * uni(0.6f, 0.8f), r * uni(0.45f, 0.65f)};
  a.eye = Eigen::Vector3f::Constant(uni(0.05f, 0.25f));
  a.lips = Eigen::Vector3f(0.6f, 0.15f, 0.2f) * uni(0.8f, 1.2f);
  a.axis_u = s * uni(0.22f, 0.27f);
  a.axis_v = s * uni(0.30f, 0.34f);
  a.center = Eigen::Vector2f(s / 2 + s * uni(-0.04f, 0.04f), s / 2 + s * uni(-0.04f, 0.04f));
  a.amp_x = s * uni(0.02f, 0.06f);
  a.amp_y = s * uni(0.01f, 0.04f);
  a.period_x = uni(20, 50);
  a.period_y = uni(20, 50);
  a.phase_x = uni(0, 6.283f);
  a.phase_y = uni(0, 6.283f);
  a.rot_amp = uni(0.05f, 0.2f);
  a.rot_period = uni(25, 60);
  a.rot_phase = uni(0, 6.283f);
  a.scale_amp = uni(0.0f, 0.04f);
  a.scale_period = uni(30, 70);
  a.mouth_period = uni(8, 20);
  for (auto& t : a.texture) t = {uni(1, 4), uni(1, 4), uni(0, 6.283f)};
  a.noise = 0.01f;
  return a;
}

}  // namespace

Video render_face_video(const std::string& video_id, int frames, int image_size, Rng& rng) {
  DS_CHECK(frames >= 1 && image_size >= 16, "invalid_argument", "synthetic videos need frames >= 1 and size >= 16");
  const Appearance ap = sample_appearance(image_size, rng);
  std::normal_distribution<float> noise(0.0f, ap.noise);
  const float two_pi = 2 * std::numbers::pi_v<float>;
  const float s = static_cast<float>(image_size);

  Video video;
  video.record.video_id = video_id;
  video.record.label = Label::Real;
  video.record.domain_tag = "real";
  for (int t = 0; t < frames; ++t) {
    const float ft = static_cast<float>(t);
    const Eigen::Vector2f c = ap.center + Eigen::Vector2f(ap.amp_x * std::sin(two_pi * ft / ap.period_x + ap.phase_x),
                                                          ap.amp_y * std::sin(two_pi * ft / ap.period_y + ap.phase_y));
    const float theta = ap.rot_amp * std::sin(two_pi * ft / ap.rot_period + ap.rot_phase);
    const float scale = 1.0f + ap.scale_amp * std::sin(two_pi * ft / ap.scale_period);
    const float mouth_open = 0.5f + 0.5f * std::sin(two_pi * ft / ap.mouth_period);
    const float cs = std::cos(theta), sn = std::sin(theta);
    const float au = ap.axis_u * scale, av = ap.axis_v * scale;

    Frame frame(image_size, image_size);
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        const float px = x + 0.5f, py = y + 0.5f;
        // Background: two-colour gradient plus stripes.
        const float g = 0.5f + 0.5f * ((px / s - 0.5f) * std::cos(ap.bg_angle) + (py / s - 0.5f) * std::sin(ap.bg_angle));
        const float stripe =
            ap.stripe_amp * std::sin(two_pi * ap.stripe_freq *
                                     ((px * std::cos(ap.stripe_angle) + py * std::sin(ap.stripe_angle)) / s));
        Eigen::Vector3f color = (1 - g) * ap.bg_a + g * ap.bg_b + Eigen::Vector3f::Constant(stripe);

        // Face coordinates normalized by the head axes.
        const float dx = px - c.x(), dy = py - c.y();
        const float nu = (cs * dx + sn * dy) / au;
        const float nv = (-sn * dx + cs * dy) / av;
        const float head = ellipse_cover(nu, nv, 1.0f, 1.0f, std::min(au, av));
        if (head > 0) {
          float tex = 0;
          for (const auto& tc : ap.texture) tex += 0.03f * std::sin(tc.x() * nu * 3.0f + tc.y() * nv * 3.0f + tc.z());
          const float shade = 0.92f - 0.08f * nu - 0.1f * (nu * nu + nv * nv);
          Eigen::Vector3f face = ap.skin * (shade + tex);
          // Nose shadow.
          face *= 1.0f - 0.15f * ellipse_cover(nu, nv - 0.1f, 0.08f, 0.15f, 0.08f * au);
          // Brows, eyes, mouth.
          for (float side : {-1.0f, 1.0f}) {
            const float brow = ellipse_cover(nu - side * 0.4f, nv + 0.42f, 0.2f, 0.04f, 0.04f * av);
            face = (1 - brow) * face + brow * ap.eye;
            const float sclera = ellipse_cover(nu - side * 0.4f, nv + 0.2f, 0.17f, 0.09f, 0.09f * av);
            face = (1 - sclera) * face + sclera * Eigen::Vector3f::Constant(0.92f);
            const float iris = ellipse_cover(nu - side * 0.4f, nv + 0.2f, 0.07f, 0.07f * au / av, 0.07f * au);
            face = (1 - iris) * face + iris * ap.eye;
          }
          const float mouth = ellipse_cover(nu, nv - 0.5f, 0.3f, 0.05f + 0.05f * mouth_open, 0.05f * av);
          face = (1 - mouth) * face + mouth * ap.lips;
          color = (1 - head) * color + head * face;
        }
        for (int ch = 0; ch < 3; ++ch) frame.channels[ch](y, x) = quantize(color(ch) + noise(rng));
      }
    video.frames.push_back(std::move(frame));

    // Landmarks: 16 outline points, eye centres, nose tip, mouth corners and centre.
    auto to_image = [&](float u, float v) {
      const float lx = u * au, ly = v * av;
      const Eigen::Vector2f p(c.x() + cs * lx - sn * ly, c.y() + sn * lx + cs * ly);
      return Eigen::Vector2f(round_milli(std::clamp(p.x(), 0.0f, s)), round_milli(std::clamp(p.y(), 0.0f, s)));
    };
    LandmarkSet lm;
    for (int k = 0; k < 16; ++k) {
      const float phi = two_pi * static_cast<float>(k) / 16.0f;
      lm.points.push_back(to_image(std::cos(phi), std::sin(phi)));
    }
    for (auto [u, v] : {std::pair{-0.4f, -0.2f}, {0.4f, -0.2f}, {0.0f, 0.1f}, {-0.3f, 0.5f}, {0.3f, 0.5f}, {0.0f, 0.5f}})
      lm.points.push_back(to_image(u, v));
    video.landmarks.push_back(std::move(lm));
  }
  return video;
}

std::vector<Video> generate_synthetic_videos(const SyntheticSpec& spec, std::uint64_t seed) {
  DS_CHECK(spec.real >= 0 && spec.fake >= 0, "invalid_argument", "video counts must be non-negative");
  std::vector<Video> videos;
  char id[32];
  for (int i = 0; i < spec.fake; ++i) {
    std::snprintf(id, sizeof(id), "fake_%03d", i);
    // Like face-swap corpora, fakes are derived from the real videos (fake_i from real_i); any
    // surplus fakes get identities of their own.
    Rng render_rng = i < spec.real ? stream(seed, kRealStream, i) : stream(seed, kFakeStream, i);
    Video v = render_face_video(id, spec.frames, spec.image_size, render_rng);
    VideoClip whole;
    whole.frames = v.frames;
    whole.source_id = id;
    Rng sam_rng = stream(seed, kSamStream, i);
    SamResult sam = temporal_artifact_generate(whole, v.landmarks, sam_rng, spec.sam);
    v.frames = std::move(sam.blended.frames);
    for (auto& f : v.frames)
      for (auto& ch : f.channels) ch = ch.unaryExpr(&quantize);
    for (auto& m : sam.mask) m = m.unaryExpr(&quantize);
    DS_CHECK(!mask_is_zero(sam.mask), "sam_failed", std::string("synthetic fake '") + id + "' has an empty mask");
    v.masks = std::move(sam.mask);
    v.record.label = Label::Fake;
    v.record.domain_tag = spec.manipulation;
    videos.push_back(std::move(v));
  }
  for (int i = 0; i < spec.real; ++i) {
    std::snprintf(id, sizeof(id), "real_%03d", i);
    Rng render_rng = stream(seed, kRealStream, i);
    videos.push_back(render_face_video(id, spec.frames, spec.image_size, render_rng));
  }
  return videos;
}

void write_video(const Video& video, const fs::path& root) {
  const fs::path dir = root / video.record.video_id;
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  DS_CHECK(!ec, "io", "cannot create '" + (dir / "frames").string() + "': " + ec.message());
  char name[32];
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "%06zu.png", t);
    write_png_rgb(dir / "frames" / name, video.frames[t]);
  }
  nlohmann::json meta;
  meta["label"] = std::string(label_name(video.record.label));
  meta["manipulation"] = video.record.domain_tag;
  if (!video.landmarks.empty()) {
    write_landmarks(dir / "landmarks.txt", video.landmarks);
    meta["landmarks"] = "landmarks.txt";
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& lm : video.landmarks) {
      Eigen::Vector2f lo = lm.points.front(), hi = lm.points.front();
      for (const auto& p : lm.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      boxes.push_back({lo.x(), lo.y(), hi.x() - lo.x(), hi.y() - lo.y()});
    }
    meta["face_box"] = boxes;
  }
  if (!video.masks.empty()) {
    fs::create_directories(dir / "masks", ec);
    DS_CHECK(!ec, "io", "cannot create '" + (dir / "masks").string() + "': " + ec.message());
    for (std::size_t t = 0; t < video.masks.size(); ++t) {
      std::snprintf(name, sizeof(name), "%06zu.png", t);
      write_png_gray(dir / "masks" / name, video.masks[t]);
    }
    meta["masks"] = "masks";
  }
  std::ofstream out(dir / "meta.json");
  DS_CHECK(out, "io", "cannot write '" + (dir / "meta.json").string() + "'");
  out << meta.dump(2) << '\n';
}

fs::path generate_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir, std::uint64_t seed,
                                    bool force) {
  if (fs::exists(out_dir)) {
    DS_CHECK(force, "out_dir_exists", "output directory '" + out_dir.string() + "' already exists (use --force)");
    fs::remove_all(out_dir);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  DS_CHECK(!ec, "io", "cannot create '" + out_dir.string() + "': " + ec.message());
  for (const auto& v : generate_synthetic_videos(spec, seed)) write_video(v, out_dir);
  return out_dir;
}

}  // namespace deepshield
