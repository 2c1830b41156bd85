#pragma once

// Command-line driver for the toolkit.
//
// Subcommands:
//   run        train (model x task x group) cells; writes one JSON record per
//              cell, rebuilds the aggregate CSV, and saves pretty-printed
//              programs for solved cells
//   report     renders the collected records as a markdown table
//              (task rows x model columns, best model per task in bold)
//   enumerate  runs the enumerative baseline per task and reports 1/0
//   tasks      lists the benchmark tasks
//
// `run_cli` takes main-style arguments (without the program name) and returns
// the process exit code; the binary in tools/ forwards to it and tests call
// it in-process.

#include <string>
#include <vector>

namespace gradsynth {

int run_cli(std::vector<std::string> args);
int run_cli(int argc, char** argv);

}  // namespace gradsynth
