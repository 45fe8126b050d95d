// Copyright 2026 The mrtwin Authors
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

// Scripted SUT peer for protocol and fault-isolation tests.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/sut.hpp"

namespace {

using mrtwin::Json;

void send(const Json& j) { std::cout << j.dump() << "\n" << std::flush; }

bool contains(const std::string& haystack, const std::string& needle) {
  return !needle.empty() && haystack.find(needle) != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echo SUT fixture"};
  double steering = 0.25;
  bool stub = false;
  bool out_of_range = false;
  std::string hang_on;
  std::string crash_on;
  std::string log_path;
  app.add_option("--steering", steering, "constant steering answer");
  app.add_flag("--stub", stub, "answer with the built-in stub steering of the frame");
  app.add_flag("--out-of-range", out_of_range, "answer steering 5.0");
  app.add_option("--hang-on", hang_on, "never answer when input_path contains this");
  app.add_option("--crash-on", crash_on, "exit when input_path contains this");
  app.add_option("--log", log_path);
  CLI11_PARSE(app, argc, argv);

  std::ofstream log;
  if (!log_path.empty()) log.open(log_path, std::ios::app);

  send(Json{{"type", "hello"}, {"version", "1"}, {"capabilities", Json::array({"steering"})}});
  std::string line;
  while (std::getline(std::cin, line)) {
    if (log.is_open()) log << line << "\n" << std::flush;
    Json msg;
    try {
      msg = Json::parse(line);
    } catch (const std::exception&) {
      continue;
    }
    const std::string type = msg.value("type", "");
    if (type == "shutdown") return 0;
    if (type != "predict") continue;
    const auto id = msg.value("id", std::uint64_t{0});
    const std::string input = msg.value("input_path", "");
    if (contains(input, hang_on)) {
      for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
    }
    if (contains(input, crash_on)) std::_Exit(7);
    double answer = steering;
    if (out_of_range) {
      answer = 5.0;
    } else if (stub) {
      try {
        answer = mrtwin::stub_steering(mrtwin::read_png(input));
      } catch (const std::exception&) {
        answer = 0.0;
      }
    }
    send(Json{{"type", "prediction"}, {"id", id}, {"steering", answer}, {"throttle", 0.5}});
  }
  return 0;
}
