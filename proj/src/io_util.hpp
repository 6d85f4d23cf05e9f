#pragma once

#include <string>
#include <vector>

namespace mdbert {

std::string read_text_file(const std::string& path);
// Writes through a sibling temp file and renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

std::string trim(const std::string& s);
std::string to_lower(std::string s);
std::vector<std::string> split(const std::string& s, char sep);

// %.17g rendering, compact and round-trip exact for doubles.
std::string format_double(double v);

}  // namespace mdbert
