#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rgn {

// Walks flat `key = value` text: '#' starts a comment, blank lines are
// skipped, anything else must contain '='. Malformed lines raise
// ConfigError with the line number; key validation is the handler's job.
void for_each_config_pair(
    const std::string& text,
    const std::function<void(const std::string& key,
                             const std::string& value)>& handler);

// Strict value conversions; ConfigError names the offending key. Numbers
// must consume the whole value, sizes must be non-negative integers, and
// u64 keeps full 64-bit precision (no float round trip).
double config_double(const std::string& key, const std::string& value);
std::size_t config_size(const std::string& key, const std::string& value);
std::uint64_t config_u64(const std::string& key, const std::string& value);
std::vector<std::size_t> config_size_list(const std::string& key,
                                          const std::string& value);

// %.17g, enough digits to round trip a float64 through the text form.
std::string format_double(double v);
std::string format_size_list(const std::vector<std::size_t>& values);

std::string read_text_file(const std::string& path);   // IoError
void write_text_file(const std::string& path,
                     const std::string& text);         // IoError

}  // namespace rgn
