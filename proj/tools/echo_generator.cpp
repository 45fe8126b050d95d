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

// Scripted generator peer for protocol tests. Speaks the line protocol on
// stdin/stdout and copies each input frame to the requested output path.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"

namespace {

using mrtwin::Json;

[[noreturn]] void hang_forever() {
  for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
}

void send(const Json& j) { std::cout << j.dump() << "\n" << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echo generator fixture"};
  std::string mode = "normal";
  std::string log_path;
  std::vector<std::string> capabilities{"identity"};
  std::string hang_on;
  std::string error_on;
  app.add_option("--mode", mode)
      ->check(CLI::IsMember({"normal", "bad-id", "garbage", "hang", "error", "bad-version",
                             "no-hello", "exit-early", "wrong-dims"}));
  app.add_option("--log", log_path, "append every received line here");
  app.add_option("--capabilities", capabilities)->delimiter(',');
  app.add_option("--hang-on", hang_on, "hang when input_path contains this");
  app.add_option("--error-on", error_on, "report an error when input_path contains this");
  CLI11_PARSE(app, argc, argv);

  std::ofstream log;
  if (!log_path.empty()) log.open(log_path, std::ios::app);

  if (mode == "no-hello") hang_forever();
  send(Json{{"type", "hello"},
            {"version", mode == "bad-version" ? "2" : "1"},
            {"capabilities", capabilities}});

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
    if (type == "hello_ack") continue;
    if (type == "shutdown") return 0;
    if (type != "transform") continue;

    const auto id = msg.value("id", std::uint64_t{0});
    const std::string input = msg.value("input_path", "");
    const std::string output = msg.value("output_path", "");
    if (mode == "hang" || (!hang_on.empty() && input.find(hang_on) != std::string::npos)) {
      hang_forever();
    }
    if (mode == "exit-early") return 3;
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    if (mode == "error" || (!error_on.empty() && input.find(error_on) != std::string::npos)) {
      send(Json{{"type", "result"}, {"id", id}, {"status", "error"}, {"message", "scripted failure"}});
      continue;
    }
    try {
      if (mode == "wrong-dims") {
        const auto src = mrtwin::read_png(input);
        mrtwin::write_png(mrtwin::ImageBuffer(src.height() + 8, src.width(), 3, 0), output);
      } else {
        std::filesystem::copy_file(input, output, std::filesystem::copy_options::overwrite_existing);
      }
    } catch (const std::exception& e) {
      send(Json{{"type", "result"}, {"id", id}, {"status", "error"}, {"message", e.what()}});
      continue;
    }
    send(Json{{"type", "result"}, {"id", mode == "bad-id" ? id + 1000 : id}, {"status", "ok"}});
  }
  return 0;
}
