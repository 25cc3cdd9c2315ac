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

#include "deepshield/common.hpp"

#include <atomic>
#include <iostream>

namespace deepshield {

namespace {
void stderr_sink(std::string_view message) { std::cerr << "[deepshield] warning: " << message << '\n'; }
std::atomic<WarningSink> g_sink{&stderr_sink};
std::atomic<std::size_t> g_count{0};
}  // namespace

void set_warning_sink(WarningSink sink) { g_sink.store(sink ? sink : &stderr_sink); }

void warn(std::string_view message) {
  ++g_count;
  g_sink.load()(message);
}

std::size_t warning_count() { return g_count.load(); }

}  // namespace deepshield
