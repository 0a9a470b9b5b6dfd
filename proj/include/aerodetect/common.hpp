// Copyright (c) the aerodetect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace aerodetect {

// Errors that stem from bad user input (flags, files, manifests). The CLI
// maps these to exit code 1, everything else to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Structured-ish line logging to stderr; data never goes here.
void log_line(LogLevel level, const char* fmt, ...)
#if defined(__GNUC__)
    __attribute__((format(printf, 2, 3)))
#endif
    ;

#define AD_DEBUG(...) ::aerodetect::log_line(::aerodetect::LogLevel::kDebug, __VA_ARGS__)
#define AD_INFO(...) ::aerodetect::log_line(::aerodetect::LogLevel::kInfo, __VA_ARGS__)
#define AD_WARN(...) ::aerodetect::log_line(::aerodetect::LogLevel::kWarn, __VA_ARGS__)
#define AD_ERROR(...) ::aerodetect::log_line(::aerodetect::LogLevel::kError, __VA_ARGS__)

// Writes `bytes` to `path` atomically: temp file in the same directory,
// fsync'd, then renamed over the target.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace aerodetect
