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

#include "deepshield/config.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

namespace deepshield {

namespace {

using nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Bounds {
  double lo = -kInf;
  double hi = kInf;
  bool lo_open = false;
  bool hi_open = false;
};

Bounds at_least(double lo) { return {lo, kInf, false, false}; }
Bounds positive() { return {0.0, kInf, true, false}; }
Bounds unit() { return {0.0, 1.0, false, false}; }
Bounds unit_open_hi() { return {0.0, 1.0, false, true}; }

template <typename E>
struct EnumField {
  E& ref;
  std::vector<std::pair<std::string, E>> names;
};

struct ChoiceField {
  std::string& ref;
  std::vector<std::string> allowed;
};

// Calls f(key, field, bounds) for every config field in schema order.
template <typename F>
void for_each_field(Config& c, F&& f) {
  f("schema_version", c.schema_version, Bounds{});
  f("dataset.root", c.dataset.root, Bounds{});
  f("dataset.test_root", c.dataset.test_root, Bounds{});
  f("dataset.min_frames", c.dataset.min_frames, at_least(1));

  auto& s = c.sam;
  f("sam.color_shift_max", s.color_shift_max, unit());
  f("sam.brightness_min", s.brightness_min, positive());
  f("sam.brightness_max", s.brightness_max, positive());
  f("sam.sharpen_max", s.sharpen_max, at_least(0));
  f("sam.enhancement_prob", s.enhancement_prob, unit());
  f("sam.deform_grid", s.deform_grid, at_least(2));
  f("sam.deform_max_fraction", s.deform_max_fraction, unit());
  f("sam.blur_min", s.blur_min, at_least(1));
  f("sam.blur_max", s.blur_max, at_least(1));
  f("sam.blend_ratios", s.blend_ratios, Bounds{0.0, 1.0, true, false});
  f("sam.jitter", s.jitter, unit_open_hi());
  f("sam.blur_before_deform", s.blur_before_deform, Bounds{});

  auto& e = c.encoder.model;
  f("encoder.preset", ChoiceField{c.encoder.preset, {"full", "toy"}}, Bounds{});
  f("encoder.image_size", e.image_size, at_least(1));
  f("encoder.patch_size", e.patch_size, at_least(1));
  f("encoder.embed_dim", e.embed_dim, at_least(1));
  f("encoder.depth", e.depth, at_least(1));
  f("encoder.num_heads", e.num_heads, at_least(1));
  f("encoder.mlp_ratio", e.mlp_ratio, at_least(1));
  f("encoder.adapter_width", e.adapter_width, at_least(1));
  f("encoder.num_frames", e.num_frames, at_least(1));
  f("encoder.adapter_cls_mode",
    EnumField<AdapterClsMode>{e.adapter_cls_mode, {{"temporal", AdapterClsMode::Temporal}, {"bypass", AdapterClsMode::Bypass}}},
    Bounds{});
  f("encoder.freeze_backbone", e.freeze_backbone, Bounds{});
  f("encoder.train_layernorm", e.train_layernorm, Bounds{});
  f("encoder.pretrained_weights", e.pretrained_weights, Bounds{});

  f("dfa.alpha", c.dfa.alpha, at_least(1));
  f("dfa.beta", c.dfa.beta, positive());
  f("dfa.symmetrize_lambda", c.dfa.symmetrize_lambda, Bounds{});
  f("dfa.stats_grad", c.dfa.stats_grad, Bounds{});
  f("dfa.sigma_floor", c.dfa.sigma_floor, positive());

  auto& l = c.losses;
  f("losses.theta", l.theta, at_least(1));
  f("losses.omega", l.omega, at_least(0));
  f("losses.upsilon", l.upsilon, at_least(0));
  f("losses.tau", l.tau, positive());
  f("losses.denominator",
    EnumField<SupConDenominator>{l.denominator,
                                 {{"paper", SupConDenominator::Paper}, {"standard", SupConDenominator::Standard}}},
    Bounds{});
  f("losses.supcon_normalize", l.supcon_normalize, Bounds{});

  auto& t = c.trainer;
  f("trainer.epochs", t.epochs, at_least(1));
  f("trainer.iters_per_epoch", t.iters_per_epoch, at_least(0));
  f("trainer.batch_videos", t.batch_videos, at_least(2));
  f("trainer.clips_per_video", t.clips_per_video, at_least(1));
  f("trainer.clips_per_iteration", t.clips_per_iteration, at_least(1));
  f("trainer.learning_rate", t.learning_rate, positive());
  f("trainer.weight_decay", t.weight_decay, at_least(0));
  f("trainer.adam_beta1", t.adam_beta1, unit_open_hi());
  f("trainer.adam_beta2", t.adam_beta2, unit_open_hi());
  f("trainer.adam_eps", t.adam_eps, positive());
  f("trainer.schedule", ChoiceField{t.schedule, {"cosine", "constant"}}, Bounds{});
  f("trainer.seed", t.seed, Bounds{});
  f("trainer.sam_fake_prob", t.sam_fake_prob, unit());
  f("trainer.max_sam_retries", t.max_sam_retries, at_least(0));
  f("trainer.out_dir", t.out_dir, Bounds{});
  f("trainer.metrics_file", t.metrics_file, Bounds{});

  f("eval.colormap", ChoiceField{c.eval.colormap, {"jet", "hot", "gray"}}, Bounds{});
  f("eval.overlay_alpha", c.eval.overlay_alpha, unit());
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  return parts;
}

const json* lookup(const json& doc, const std::string& key) {
  const json* node = &doc;
  for (const auto& part : split_key(key)) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(part);
    if (it == node->end()) return nullptr;
    node = &*it;
  }
  return node;
}

void assign_path(json& doc, const std::string& key, json value) {
  const auto parts = split_key(key);
  DS_CHECK(!parts.empty(), "unknown_key", "empty config key");
  json* node = &doc;
  std::string prefix;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    prefix += (i ? "." : "") + parts[i];
    json& child = (*node)[parts[i]];
    if (child.is_null()) child = json::object();
    DS_CHECK(child.is_object(), "type_mismatch", prefix + ": expected a section object");
    node = &child;
  }
  (*node)[parts.back()] = std::move(value);
}

[[noreturn]] void type_error(const std::string& key, const char* expected, const json& v) {
  throw Error("type_mismatch", key + ": expected " + expected + ", got " + v.dump());
}

// Reads one field from JSON with strict type checking.
struct Reader {
  const json& doc;

  template <typename T>
  void operator()(const std::string& key, T&& field, const Bounds&) const {
    if (const json* v = lookup(doc, key)) read(key, *v, field);
  }

  static void read(const std::string& key, const json& v, int& out) {
    if (!v.is_number_integer()) type_error(key, "an integer", v);
    const auto x = v.get<std::int64_t>();
    DS_CHECK(x >= std::numeric_limits<int>::min() && x <= std::numeric_limits<int>::max(), "out_of_range",
             key + ": " + v.dump() + " does not fit in an int");
    out = static_cast<int>(x);
  }
  static void read(const std::string& key, const json& v, std::uint64_t& out) {
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer", v);
    out = v.get<std::uint64_t>();
  }
  static void read(const std::string& key, const json& v, double& out) {
    if (!v.is_number()) type_error(key, "a number", v);
    out = v.get<double>();
  }
  static void read(const std::string& key, const json& v, float& out) {
    if (!v.is_number()) type_error(key, "a number", v);
    out = static_cast<float>(v.get<double>());
  }
  static void read(const std::string& key, const json& v, bool& out) {
    if (!v.is_boolean()) type_error(key, "a boolean", v);
    out = v.get<bool>();
  }
  static void read(const std::string& key, const json& v, std::string& out) {
    if (!v.is_string()) type_error(key, "a string", v);
    out = v.get<std::string>();
  }
  static void read(const std::string& key, const json& v, std::vector<float>& out) {
    if (!v.is_array() || v.empty()) type_error(key, "a non-empty array of numbers", v);
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number()) type_error(key, "a non-empty array of numbers", v);
      out.push_back(static_cast<float>(x.get<double>()));
    }
  }
  static void read(const std::string& key, const json& v, ChoiceField& c) {
    if (!v.is_string()) type_error(key, "a string", v);
    const auto s = v.get<std::string>();
    for (const auto& a : c.allowed)
      if (a == s) {
        c.ref = s;
        return;
      }
    throw Error("out_of_range", key + ": unknown value '" + s + "'");
  }
  template <typename E>
  static void read(const std::string& key, const json& v, EnumField<E>& e) {
    if (!v.is_string()) type_error(key, "a string", v);
    const auto s = v.get<std::string>();
    for (const auto& [name, value] : e.names)
      if (name == s) {
        e.ref = value;
        return;
      }
    throw Error("out_of_range", key + ": unknown value '" + s + "'");
  }
};

// Shortest decimal text that round-trips the float, so 0.08f echoes as 0.08.
double float_for_json(float f) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), f);
  return std::strtod(std::string(buf, end).c_str(), nullptr);
}

struct Writer {
  json& doc;

  template <typename T>
  void operator()(const std::string& key, T&& field, const Bounds&) const {
    using U = std::remove_cvref_t<T>;
    if constexpr (std::is_same_v<U, float>) {
      assign_path(doc, key, float_for_json(field));
    } else if constexpr (std::is_same_v<U, std::vector<float>>) {
      json arr = json::array();
      for (float f : field) arr.push_back(float_for_json(f));
      assign_path(doc, key, arr);
    } else if constexpr (std::is_same_v<U, ChoiceField>) {
      assign_path(doc, key, field.ref);
    } else if constexpr (requires { field.names; }) {
      for (const auto& [name, value] : field.names)
        if (value == field.ref) assign_path(doc, key, name);
    } else {
      assign_path(doc, key, field);
    }
  }
};

std::string format_bounds(const Bounds& b) {
  std::ostringstream os;
  if (b.hi == kInf) {
    os << (b.lo_open ? "> " : ">= ") << b.lo;
  } else {
    os << "in " << (b.lo_open ? "(" : "[") << b.lo << ", " << b.hi << (b.hi_open ? ")" : "]");
  }
  return os.str();
}

void check_bounds(const std::string& key, double x, const Bounds& b) {
  const bool ok = std::isfinite(x) && (b.lo_open ? x > b.lo : x >= b.lo) && (b.hi_open ? x < b.hi : x <= b.hi);
  if (!ok) {
    std::ostringstream os;
    os << key << ": " << x << " is out of range (must be " << format_bounds(b) << ")";
    throw Error("out_of_range", os.str());
  }
}

struct RangeChecker {
  template <typename T>
  void operator()(const std::string& key, T&& field, const Bounds& b) const {
    using U = std::remove_cvref_t<T>;
    if constexpr (std::is_same_v<U, int> || std::is_same_v<U, double> || std::is_same_v<U, float>) {
      check_bounds(key, static_cast<double>(field), b);
    } else if constexpr (std::is_same_v<U, std::vector<float>>) {
      for (float f : field) check_bounds(key, f, b);
    }
  }
};

void reject_unknown(const json& node, const std::string& prefix, const std::vector<std::string>& keys) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    bool is_key = false, is_section = false;
    for (const auto& k : keys) {
      is_key |= k == path;
      is_section |= k.size() > path.size() && k.compare(0, path.size(), path) == 0 && k[path.size()] == '.';
    }
    if (is_key) continue;
    DS_CHECK(is_section, "unknown_key", "unknown config key '" + path + "'");
    DS_CHECK(it.value().is_object(), "type_mismatch", path + ": expected a section object");
    reject_unknown(it.value(), path, keys);
  }
}

bool is_blank(const std::string& text) {
  return text.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

bool Config::operator==(const Config& other) const { return config_to_json(*this) == config_to_json(other); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  Config c;
  for_each_field(c, [&](const std::string& key, auto&&, const Bounds&) { keys.push_back(key); });
  return keys;
}

void validate_config(const Config& config) {
  Config c = config;
  for_each_field(c, RangeChecker{});
  DS_CHECK(c.schema_version == kConfigSchemaVersion, "out_of_range",
           "schema_version: " + std::to_string(c.schema_version) + " is not supported (expected " +
               std::to_string(kConfigSchemaVersion) + ")");
  DS_CHECK(c.sam.blur_min % 2 == 1 && c.sam.blur_max % 2 == 1, "out_of_range", "sam.blur_min/blur_max: must be odd");
  DS_CHECK(c.sam.blur_min <= c.sam.blur_max, "out_of_range", "sam.blur_min: must not exceed sam.blur_max");
  DS_CHECK(c.sam.brightness_min <= c.sam.brightness_max, "out_of_range",
           "sam.brightness_min: must not exceed sam.brightness_max");
  DS_CHECK(c.trainer.batch_videos % 2 == 0, "out_of_range", "trainer.batch_videos: must be even");
  DS_CHECK(c.trainer.clips_per_iteration <= c.trainer.clips_per_video, "out_of_range",
           "trainer.clips_per_iteration: must not exceed trainer.clips_per_video");
  try {
    c.encoder.model.validate();
  } catch (const Error& e) {
    throw Error("out_of_range", std::string("encoder: ") + e.what());
  }
}

Config parse_config_text(const std::string& text, const ConfigOverrides& overrides) {
  json doc = json::object();
  if (!is_blank(text)) {
    try {
      doc = json::parse(text, nullptr, true, true);
    } catch (const json::exception& e) {
      throw Error("parse_error", std::string("config: ") + e.what());
    }
    DS_CHECK(doc.is_object(), "type_mismatch", "config: top level must be an object");
  }
  for (const auto& [key, raw] : overrides) {
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    assign_path(doc, key, std::move(value));
  }
  reject_unknown(doc, "", config_keys());

  Config c;
  // The preset replaces the whole encoder geometry before explicit keys apply.
  if (const json* p = lookup(doc, "encoder.preset")) {
    ChoiceField preset{c.encoder.preset, {"full", "toy"}};
    Reader::read("encoder.preset", *p, preset);
    c.encoder.model = c.encoder.preset == "toy" ? EncoderConfig::toy() : EncoderConfig::full();
  }
  for_each_field(c, Reader{doc});
  validate_config(c);
  return c;
}

Config parse_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  DS_CHECK(in, "io", "cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str(), overrides);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string config_to_json(const Config& config) {
  json doc = json::object();
  Config c = config;
  for_each_field(c, Writer{doc});
  return doc.dump(2);
}

void write_config(const std::filesystem::path& path, const Config& config) {
  std::ofstream out(path);
  DS_CHECK(out, "io", "cannot write config '" + path.string() + "'");
  out << config_to_json(config) << '\n';
  DS_CHECK(out.good(), "io", "short write to '" + path.string() + "'");
}

}  // namespace deepshield
