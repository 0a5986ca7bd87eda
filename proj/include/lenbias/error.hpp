/*
 * Copyright 2026 The lenbias Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace lenbias {

// Every failure the library reports derives from Error. The category decides
// the CLI exit code: config/data problems -> 1, scorer or protocol -> 2,
// filesystem -> 3.
enum class ErrorCategory { kConfig = 1, kScorer = 2, kIo = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

// Invalid configuration, malformed input records, violated preconditions.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::kConfig, what) {}
};

// Adapter crashes, timeouts, malformed or incomplete responses.
class ScorerError : public Error {
 public:
  explicit ScorerError(const std::string& what)
      : Error(ErrorCategory::kScorer, what) {}
};

// Malformed input records (corpus rows, suite files, score files).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorCategory::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

}  // namespace lenbias
