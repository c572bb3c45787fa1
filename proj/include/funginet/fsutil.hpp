#pragma once

#include <string>

namespace funginet {

// Writes via a temp file in the same directory and renames on success, so a
// failed command never leaves a partial output behind.
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

}  // namespace funginet
