#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmeval {

/// FNV-1a 64-bit digest. Used for prompt hashes and config/file digests.
std::uint64_t fnv1a64(std::string_view data);

std::string to_hex(std::uint64_t v);

std::string lower_copy(std::string_view s);
std::string trim_copy(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// RFC 4180 style field quoting (only when the field needs it).
std::string csv_escape(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);
/// Split one CSV line honoring double-quoted fields.
std::vector<std::string> csv_split(std::string_view line);

std::string iso8601_utc_now();

std::string read_text_file(const std::filesystem::path& path);           // throws IoError
void write_text_file(const std::filesystem::path& path, std::string_view text);  // throws IoError

/// Hex digest of a file's bytes; throws IoError when unreadable.
std::string file_digest_hex(const std::filesystem::path& path);

}  // namespace mmeval
