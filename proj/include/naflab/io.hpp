#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace naflab {

// Shortest round-trip decimal form, locale-independent; infinities print as
// inf/-inf. Every CSV and JSON number goes through here so outputs are
// byte-stable.
std::string format_double(double v);

// Write-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace naflab
