#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace martlens {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`. Readers see
// either the old content or the new content, never a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);

}  // namespace martlens
