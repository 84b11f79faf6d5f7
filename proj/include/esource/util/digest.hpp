#pragma once

#include <string>
#include <string_view>

namespace esource {

/// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Lower-case hex HMAC-SHA256(key, bytes).
std::string hmac_sha256_hex(std::string_view key, std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws Error(InvalidArgument) on malformed input.
std::string base64_decode(std::string_view text);

/// Name-based UUID (version 5 layout over SHA-256 truncated) so retries of the
/// same logical request carry the same key.
std::string stable_uuid(std::string_view name);

}  // namespace esource
