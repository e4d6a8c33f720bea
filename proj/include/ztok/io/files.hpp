#pragma once

#include <string>
#include <vector>

namespace ztok::io {

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// Write via a temp file in the same directory plus rename, so failures
// never leave a partial output behind.
void write_file_atomic(const std::string& path, const std::string& contents);

bool file_exists(const std::string& path);

}  // namespace ztok::io
