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

// Scripted wire-protocol adapter for tests.
//
//   fake_adapter stub [--echo]   score = -(code points of hypothesis)/1000, streamed
//   fake_adapter shuffle         same scores, all responses emitted in shuffled order
//   fake_adapter drop            omits the last response
//   fake_adapter duplicate       repeats the first response
//   fake_adapter crash N         answers N requests, then dies with SIGKILL
//   fake_adapter error           emits an error line
//   fake_adapter garbage         emits a non-JSON line
//   fake_adapter slow            never answers
//   fake_adapter exit4           answers everything, then exits 4
//   fake_adapter density C       constant density C for every request
//   fake_adapter count           token counter: whitespace tokens per input line
//   fake_adapter perturb-ok      prefixes the first segment with "XX "
//   fake_adapter perturb-noop    returns the text unchanged
//   fake_adapter perturb-tail    edits the end of the passage

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace {

std::size_t code_points(const std::string& s) {
  std::size_t n = 0;
  for (const unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

void emit(const nlohmann::json& j) {
  std::cout << j.dump() << '\n' << std::flush;
}

nlohmann::json stub_response(const nlohmann::json& req, bool echo) {
  nlohmann::json r = {{"id", req["id"]},
                      {"score", -static_cast<double>(code_points(req["hypothesis"].get<std::string>())) / 1000.0},
                      {"is_density", false},
                      {"spans", nullptr}};
  if (echo) r["echo"] = req["hypothesis"];
  return r;
}

bool violates_contract(const nlohmann::json& req) {
  return req.value("mode", std::string("qe")) != "qe" && (!req.contains("reference") || req["reference"].is_null());
}

std::vector<nlohmann::json> read_all() {
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  const std::string mode = argc > 1 ? argv[1] : "stub";
  const std::string arg = argc > 2 ? argv[2] : "";
  std::string line;

  if (mode == "stub") {
    const bool echo = arg == "--echo";
    while (std::getline(std::cin, line)) {
      if (line.empty()) continue;
      const auto req = nlohmann::json::parse(line);
      if (violates_contract(req)) {
        emit({{"error", "mode " + req["mode"].get<std::string>() + " needs a reference"}});
        return 2;
      }
      emit(stub_response(req, echo));
    }
    return 0;
  }
  if (mode == "shuffle") {
    auto reqs = read_all();
    std::mt19937_64 rng(12345);
    std::shuffle(reqs.begin(), reqs.end(), rng);
    for (const auto& r : reqs) emit(stub_response(r, true));
    return 0;
  }
  if (mode == "drop" || mode == "duplicate" || mode == "exit4") {
    const auto reqs = read_all();
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      if (mode == "drop" && i + 1 == reqs.size()) break;
      emit(stub_response(reqs[i], false));
      if (mode == "duplicate" && i == 0) emit(stub_response(reqs[i], false));
    }
    return mode == "exit4" ? 4 : 0;
  }
  if (mode == "crash") {
    const long limit = arg.empty() ? 0 : std::stol(arg);
    long answered = 0;
    while (std::getline(std::cin, line)) {
      if (answered == limit) {
        std::raise(SIGKILL);
      }
      emit(stub_response(nlohmann::json::parse(line), false));
      ++answered;
    }
    std::raise(SIGKILL);
  }
  if (mode == "error") {
    std::getline(std::cin, line);
    emit({{"error", "model failed to load"}});
    return 2;
  }
  if (mode == "garbage") {
    std::getline(std::cin, line);
    std::cout << "this is not json\n" << std::flush;
    return 0;
  }
  if (mode == "slow") {
    std::this_thread::sleep_for(std::chrono::seconds(60));
    return 0;
  }
  if (mode == "density") {
    const double c = std::stod(arg);
    while (std::getline(std::cin, line)) {
      const auto req = nlohmann::json::parse(line);
      emit({{"id", req["id"]}, {"score", c}, {"is_density", true}, {"spans", nullptr}});
    }
    return 0;
  }
  if (mode == "count") {
    while (std::getline(std::cin, line)) {
      std::size_t n = 0;
      bool in_word = false;
      for (const char c : line) {
        const bool space = c == ' ' || c == '\t';
        if (!space && !in_word) ++n;
        in_word = !space;
      }
      std::cout << n << '\n' << std::flush;
    }
    return 0;
  }
  if (mode == "perturb-ok" || mode == "perturb-noop" || mode == "perturb-tail") {
    while (std::getline(std::cin, line)) {
      const auto req = nlohmann::json::parse(line);
      std::string text = req["text"].get<std::string>();
      nlohmann::json span = nullptr;
      if (mode == "perturb-ok") {
        text = "XX " + text;
        span = {0, 2};
      } else if (mode == "perturb-tail") {
        text += " XX";
        span = {0, 1};
      }
      emit({{"id", req["id"]}, {"text", text}, {"span", span}, {"note", "inserted"}});
    }
    return 0;
  }
  std::cerr << "unknown mode " << mode << "\n";
  return 64;
}
