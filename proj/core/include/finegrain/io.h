#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace finegrain {

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames over the target, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Splits on '\n'; a trailing '\r' is stripped from each line.
std::vector<std::string> split_lines(std::string_view text);

// Bit-exact text encoding of a double (C99 hex-float, e.g. "0x1.8p+1").
std::string encode_hex_double(double value);
double decode_hex_double(std::string_view text);

}  // namespace finegrain
