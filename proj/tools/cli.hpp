#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace mppinvest::cli {

/// Exit codes: 0 success, 1 numerical or infeasibility failure, 2 usage or I/O error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ull);

}  // namespace mppinvest::cli
