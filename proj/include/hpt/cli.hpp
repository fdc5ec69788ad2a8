#pragma once

#include <string>
#include <utility>
#include <vector>

namespace hpt {

// One CLI run: subcommand plus config file, key=value overrides and output dir.
struct CommandInvocation {
    std::string subcommand;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string out_dir = ".";
};

// Executes a subcommand; returns the process exit status. Errors print a
// one-line diagnostic to stderr and return nonzero.
int dispatch(const CommandInvocation& invocation);

// argv parsing for the hpt binary; throws std::invalid_argument on bad usage.
CommandInvocation parse_cli_args(int argc, const char* const* argv);

std::string cli_usage();

}  // namespace hpt
