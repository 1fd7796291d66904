#pragma once

#include <filesystem>
#include <string>

namespace hp::cli {

inline constexpr const char* kVersion = "0.1.0";

// Entry point for the `healthpredictor` binary. Returns the process exit code.
int run(int argc, const char* const* argv);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace hp::cli
