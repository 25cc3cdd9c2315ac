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

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deepshield {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

enum class Label : std::uint8_t { Real = 0, Fake = 1 };

inline int label_value(Label l) { return l == Label::Fake ? 1 : 0; }
inline std::string_view label_name(Label l) { return l == Label::Fake ? "fake" : "real"; }

/// Error carrying a stable machine-readable code, surfaced by the CLI as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define DS_CHECK(cond, code, msg)                   \
  do {                                              \
    if (!(cond)) throw ::deepshield::Error(code, msg); \
  } while (0)

// Warnings go through a replaceable sink so tests can observe them.
using WarningSink = void (*)(std::string_view);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);
std::size_t warning_count();

/// Beta(a, b) draw via two gamma variates.
template <typename Gen>
double sample_beta(double a, double b, Gen& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0.0) return std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
  return x / (x + y);
}

}  // namespace deepshield
