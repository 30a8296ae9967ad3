#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ncdforest {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Whole-file read. Throws Error naming the path on failure.
Bytes read_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, ByteView data);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(ByteView data);
std::string sha256_hex(const std::string& text);

/// Streaming SHA-256 of a file without holding it in memory.
std::string sha256_file(const std::filesystem::path& path);

Bytes concat(ByteView a, ByteView b);

}  // namespace ncdforest
