#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dopr::textio {

/// Shortest round-trip-safe decimal form (17 significant digits).
std::string format_real(double value);

/// Writes to a sibling temp file, then renames over the target, so readers
/// only ever observe the old or the new complete content.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split_lines(const std::string& text);
std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split_char(std::string_view line, char sep);

long long parse_int(std::string_view field, const std::string& context);
unsigned long long parse_u64(std::string_view field, const std::string& context);
double parse_real(std::string_view field, const std::string& context);

}  // namespace dopr::textio
