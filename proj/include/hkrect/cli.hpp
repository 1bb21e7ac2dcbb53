#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace hkrect::cli {

// Exit codes
constexpr int ok = 0;
constexpr int failed_check = 1;
constexpr int usage_error = 2;

// Entry point of the hkrect tool. Output goes to `out` unless --out is given.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// 64-bit FNV-1a, the hash printed as `# manifest <hex>` in every output.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace hkrect::cli
