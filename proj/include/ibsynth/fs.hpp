// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ibsynth {

namespace fs = std::filesystem;

/// Writes `contents` to a unique sibling temporary and renames it over `path`.
/// Parent directories are created. Readers see either the old or the new file.
void atomic_write(const fs::path& path, std::string_view contents);

/// Whole-file read; nullopt when the file does not exist.
std::optional<std::string> read_file(const fs::path& path);

/// Reads a file that must exist; throws IoError otherwise.
std::string read_existing_file(const fs::path& path);

/// Maps an arbitrary identifier to a single safe path component by
/// percent-encoding everything outside [A-Za-z0-9._-]. Injective.
std::string path_component(std::string_view id);

/// Splits text into lines, dropping a trailing empty line and '\r'.
std::vector<std::string> split_lines(std::string_view text);

}  // namespace ibsynth
