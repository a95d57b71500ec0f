#pragma once

// Command-line front end: impute, describe-video, join, estimate, simulate,
// report and heatmap subcommands. Each run writes a JSON manifest with input
// and output digests.

#include <iosfwd>
#include <string>
#include <string_view>

namespace iclv::cli {

/// Exit status: 0 success, 1 runtime or model error, 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace iclv::cli
