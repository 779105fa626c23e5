#pragma once

#include <string>
#include <vector>

namespace gtn {

/// Shortest decimal string that round-trips the exact double. All CSV/JSON
/// artifacts use this so identical values always serialize identically.
std::string fmt_double(double v);

/// Strict full-string parse; throws on trailing garbage or empty input.
double parse_double(const std::string& s);

std::vector<std::string> split_csv(const std::string& line);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gtn
