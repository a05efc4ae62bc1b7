// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace layerwise {

// Process exit statuses of the `layerwise` tool.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;     // any other error
inline constexpr int usage = 2;       // bad flags or configuration
inline constexpr int data = 3;        // corpus, trace or checkpoint contents
inline constexpr int io = 4;          // files and directories
inline constexpr int numeric = 5;     // non-finite values
inline constexpr int schedule = 6;    // inconsistent stage schedule
inline constexpr int assumption = 7;  // formula used outside its assumptions
inline constexpr int dimension = 8;   // tensor shape mismatch
}  // namespace exit_code

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layerwise
