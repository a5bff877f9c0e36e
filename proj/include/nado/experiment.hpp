// Copyright 2026 The nado Authors.
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

// Config-driven experiment runner: train-base, train-nado, evaluate and
// reproduce. Every run writes config.json (resolved config, version and
// fingerprints) next to its metric files.

#ifndef NADO_EXPERIMENT_HPP_
#define NADO_EXPERIMENT_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nado/error.hpp"

namespace nado {

inline constexpr const char* kVersion = "0.1.0";

enum class LogLevel { kInfo, kWarn, kError };

using LogFn = std::function<void(LogLevel, const std::string&)>;

// "[INFO] msg" etc. on standard error.
void stderr_log(LogLevel level, const std::string& message);

struct RunRequest {
  std::string command;  // empty: taken from the config's "command" key
  std::string demo;     // reproduce only; may also come from the config
  nlohmann::json config;
  std::string config_dir;  // relative paths in the config resolve here
  std::optional<std::uint64_t> seed;
  std::string out_dir;  // empty: the config's "out" key, else "out"
  std::vector<std::string> overrides;
};

std::vector<std::string> command_names();
std::vector<std::string> demo_names();

// Throws nado::Error.
void run_request(const RunRequest& request, const LogFn& log = stderr_log);

// 0 success, 2 config, 3 capacity, 4 infeasible control (including dead
// ends), 1 anything else.
int exit_code_for(ErrorCode code);

// Runs and maps failures to exit codes; the message goes to `log` and, when
// given, to `error`.
int run_request_status(const RunRequest& request, const LogFn& log = stderr_log,
                       std::string* error = nullptr);

// Reads and parses a JSON file (kIo / kConfig on failure).
nlohmann::json read_json_file(const std::string& path);

}  // namespace nado

#endif  // NADO_EXPERIMENT_HPP_
