#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace dfuse {

// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// zlib CRC-32.
std::uint32_t crc32(std::span<const unsigned char> bytes);
std::uint32_t crc32(std::string_view bytes);

}  // namespace dfuse
