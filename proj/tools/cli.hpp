#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tabx::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

// args excludes the program name. Diagnostics go to `err`, summaries to `out`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tabx::cli
