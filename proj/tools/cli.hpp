#pragma once

#include <string>
#include <vector>

namespace reskin::cli {

enum ExitCode : int { ok = 0, config_error = 2, io_error = 3, numerical_error = 4 };

// Runs the command line in-process; returns the exit code.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace reskin::cli
