#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmpos::cli
{

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

// Runs one invocation. args excludes the program name.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace mmpos::cli
