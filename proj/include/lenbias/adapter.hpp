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

#include <chrono>
#include <cstddef>
#include <json.hpp>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lenbias/error.hpp"
#include "lenbias/subprocess.hpp"

namespace lenbias {

inline std::string describe_wait_status(int status) {
  if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
  if (WIFSIGNALED(status)) return "signal " + std::to_string(WTERMSIG(status));
  return "status " + std::to_string(status);
}

// Sends `request_lines` (one JSON object each, no terminator) to a freshly
// spawned adapter and collects exactly one response object per id. Responses
// may arrive in any order; the result follows request order. A line starting
// with {"error": aborts the batch. Any violation throws ScorerError and no
// partial result escapes. `timeout` bounds the wait for each response line.
inline std::vector<nlohmann::json> exchange_lines(const std::string& command,
                                                  const std::vector<std::string>& request_lines,
                                                  const std::vector<std::string>& ids,
                                                  std::chrono::milliseconds timeout,
                                                  std::string_view who = "adapter") {
  const std::string name(who);
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!slot.emplace(ids[i], i).second) {
      throw ConfigError("duplicate request id '" + ids[i] + "'");
    }
  }
  if (request_lines.empty()) return {};

  Subprocess proc(command);
  std::string payload;
  for (const auto& line : request_lines) {
    payload += line;
    payload += '\n';
  }
  std::thread writer([&] {
    proc.write_all(payload);
    proc.close_stdin();
  });

  std::vector<nlohmann::json> responses(ids.size());
  std::vector<bool> seen(ids.size(), false);
  std::size_t received = 0;
  std::string failure;
  std::string line;

  while (received < ids.size() && failure.empty()) {
    const auto st = proc.read_line(line, timeout);
    if (st == Subprocess::ReadStatus::kTimeout) {
      failure = name + " timed out after " + std::to_string(timeout.count()) +
                " ms waiting for a response";
      break;
    }
    if (st == Subprocess::ReadStatus::kEof) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!seen[i]) {
          failure = "missing response for id " + ids[i];
          break;
        }
      }
      break;
    }
    if (line.rfind("{\"error\":", 0) == 0) {
      std::string message = line;
      try {
        const auto j = nlohmann::json::parse(line);
        if (j["error"].is_string()) message = j["error"].get<std::string>();
      } catch (const nlohmann::json::exception&) {
      }
      failure = name + " reported an error: " + message;
      break;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      failure = "malformed response line from " + name + ": " + line.substr(0, 200);
      break;
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      failure = "malformed response line from " + name + " (no string id): " + line.substr(0, 200);
      break;
    }
    const auto id = j["id"].get<std::string>();
    const auto it = slot.find(id);
    if (it == slot.end()) {
      failure = "unknown response id " + id;
      break;
    }
    if (seen[it->second]) {
      failure = "duplicate response id " + id;
      break;
    }
    seen[it->second] = true;
    responses[it->second] = std::move(j);
    ++received;
  }

  if (!failure.empty()) {
    proc.kill();
    writer.join();
    const int status = proc.wait();
    if (failure.rfind("missing response", 0) == 0) {
      failure += " (" + name + " ended with " + describe_wait_status(status) + ")";
    }
    throw ScorerError(failure);
  }

  writer.join();
  // The adapter should exit once its input closes; give it one timeout.
  for (;;) {
    const auto st = proc.read_line(line, timeout);
    if (st == Subprocess::ReadStatus::kEof) break;
    if (st == Subprocess::ReadStatus::kTimeout) {
      proc.kill();
      break;
    }
  }
  const int status = proc.wait();
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw ScorerError(name + " ended with " + describe_wait_status(status));
  }
  return responses;
}

}  // namespace lenbias
