#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace qean {

/// Writes to a sibling temp file and renames it over `path`. IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
/// Whole file as text. IoError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Shortest-safe full precision ("%.17g").
std::string format_double(double v);

}  // namespace qean
