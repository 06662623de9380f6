#pragma once

// Command-line front end. Kept in the library so tests can drive it without
// spawning processes; tools/smartcity.cpp is a thin main().
//
// Exit codes: 0 ok, 1 domain failure (invalid chain, unknown tx, missing
// plan), 2 usage or schema error. Results go to `out` as canonical JSON
// followed by a newline; diagnostics go to `err`.

#include <ostream>
#include <string>
#include <vector>

namespace smartcity::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smartcity::cli
