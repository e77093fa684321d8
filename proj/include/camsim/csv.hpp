#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace camsim::csv {

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

double to_double(std::string_view field, const std::string& source, std::size_t line);
std::int64_t to_int(std::string_view field, const std::string& source, std::size_t line);

/// Reads a whole text file; throws IoError naming the path when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Splits text into lines, dropping a trailing '\r' on each.
std::vector<std::string_view> lines(std::string_view text);

/// Writes `content` to `path` through a temporary file and rename.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace camsim::csv
