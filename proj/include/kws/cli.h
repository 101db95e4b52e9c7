// Copyright (c) 2026 The kwshand Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The kws command line: run configuration and the subcommands.

#ifndef KWS_CLI_H_
#define KWS_CLI_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kws/error.h"
#include "kws/network.h"

namespace kws {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitCheckpoint = 3,
};

// Every knob any subcommand reads. Keys in config files and on the command
// line are the kebab-case flag names ("batch-size", "no-augment", ...).
struct RunConfig {
  std::string data_dir;
  std::string out = "kws_run";
  int epochs = 90;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 17;
  bool no_augment = false;
  bool no_timing = false;
  std::string checkpoint;
  std::string split = "val";
  bool json = false;
  std::string wav;
  std::string gesture_table;
  double threshold = 0.7;
  std::string input;
  int hop_ms = 500;
  int refractory_ms = 1000;
  bool fresh = false;
};

// Raw string values keyed by flag name.
using ConfigLayer = std::map<std::string, std::string>;

// Environment variable holding the data directory used when no layer sets
// "data-dir".
inline constexpr char kDataDirEnv[] = "KWS_DATA_DIR";

// Defaults (with the environment's data dir), then file, then flags.
// Throws kInvalidArgument on unknown keys or unparsable values.
RunConfig ResolveRunConfig(const ConfigLayer& file, const ConfigLayer& flags,
                           const char* env_data_dir);

// Reads a flat JSON object; numbers and booleans become their text.
ConfigLayer LoadConfigFile(const std::filesystem::path& path);

int ExitCodeFor(ErrorCode code);

struct LayerTableReport {
  std::string text;
  bool conforms = false;  // shapes and counts equal the reference table
};

// Layer table with output shapes and parameter counts, plus totals.
LayerTableReport RenderLayerTable(const Network<float>& network);

// Runs one subcommand; args exclude the program name.
int RunCli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
           std::ostream& err);

}  // namespace kws

#endif  // KWS_CLI_H_
