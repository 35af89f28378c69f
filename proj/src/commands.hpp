// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// JSON-config command layer shared by the C API and the CLI. Every command
// takes one JSON object, validates it (unknown keys rejected), runs, and
// returns a machine-readable summary. Each training command echoes its full
// effective config into the run directory as config.json; re-running the
// command with that echo reproduces the run byte for byte.
#pragma once

#include <string>

namespace proxlab {

struct CommandResult {
  int status = 0;  // 0 ok, 2 config error, 3 missing input, 4 runtime failure
  std::string error;         // empty on success
  std::string summary_json;  // empty on failure
};

// command: gen-data | pretrain | finetune | rl | dpo | eval | report | sweep
CommandResult run_command(const std::string& command,
                          const std::string& config_json);

}  // namespace proxlab
