#pragma once

#include <string>
#include <vector>

namespace geocloud {

// Command-line entry point. Returns 0 on success, 1 on runtime failure and 2
// on a usage error.
int run_cli(int argc, const char* const* argv);

// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace geocloud
