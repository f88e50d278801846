// Copyright 2026 The Navigability Authors
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

#include "navig/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace navig {

namespace {

std::optional<LogLevel>& level_override() {
  static std::optional<LogLevel> level;
  return level;
}

LogLevel level_from_env() {
  const char* v = std::getenv("NAVIG_LOG");
  if (!v) return LogLevel::kWarn;
  const std::string s(v);
  if (s == "error") return LogLevel::kError;
  if (s == "info") return LogLevel::kInfo;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

LogLevel log_level() {
  static const LogLevel from_env = level_from_env();
  return level_override().value_or(from_env);
}

void set_log_level(LogLevel level) { level_override() = level; }

void log(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "[navig " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace navig
