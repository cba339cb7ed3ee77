#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bfq/calibrate.hpp"

namespace bfq {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitUsage = 2, kExitDiverged = 3 };

/// One calibration job as read from a config file.
struct JobConfig {
  TrainConfig train;
  std::optional<std::string> archetype;  // synthesize data when no data file is given
  std::size_t n = 64;
  std::size_t m_samples = 128;
  std::string data;
  std::string out_transform;
  std::string out_report;
  bool seed_set = false;
};

// Accepts the TrainConfig fields at top level with quantization under
// "scheme" ({"bits", "weights", "activations", "enabled"}). Unknown keys and
// wrong types raise Error("config") naming the field path.
JobConfig parse_job_config(const std::string& json_text);

// args excludes the program name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bfq
