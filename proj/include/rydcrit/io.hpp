#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rydcrit {

std::string sha256_hex(std::string_view data);

/// Shortest round-trip decimal form of a double; stable across runs.
std::string format_double(double v);

/// Joins already-formatted fields with commas.
std::string csv_row(const std::vector<std::string>& fields);
std::string csv_row(const std::vector<double>& values);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace rydcrit
