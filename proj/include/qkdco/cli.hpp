#pragma once

#include <string>
#include <vector>

namespace qkdco {

// Inclusive grid from "a:b:step" or an explicit comma list "a,b,c".
std::vector<double> parse_grid(const std::string& text, const std::string& flag);

// Full command-line entry point. Exit codes: 0 success (including "no key
// possible", reported as skr = 0), 1 invalid configuration or usage,
// 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace qkdco
