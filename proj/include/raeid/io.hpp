#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace raeid {

std::uint64_t fnv1a(std::string_view bytes);
std::string fnv1a_hex(std::string_view bytes);

/// "%.6f" rendering used by every CSV writer.
std::string fixed6(double v);
/// Empty string for an absent value.
std::string fixed6(const std::optional<double>& v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

/// Whole-string parse; throws std::invalid_argument on trailing garbage.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over `path`, so readers never
/// observe a partial file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace raeid
