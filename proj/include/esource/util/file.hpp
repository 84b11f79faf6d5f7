#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace esource {

/// Whole-file read; throws Error(StorageError) if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Writes atomically via a sibling temp file and rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace esource
