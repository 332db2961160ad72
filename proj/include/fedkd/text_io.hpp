#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedkd {

// Shortest decimal rendering that round-trips the exact double value.
std::string format_double(double v);

// Strict parsers; `what` names the field in error messages.
double parse_double(std::string_view s, const std::string& what);
std::int64_t parse_int(std::string_view s, const std::string& what);

std::vector<std::string_view> split(std::string_view line, char sep);

// Write to <path>.tmp then rename over <path>, so readers never observe a
// partial file and re-runs are append-free.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace fedkd
