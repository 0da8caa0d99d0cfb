#include "regunet/kvconfig.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "regunet/errors.hpp"

namespace rgn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

void for_each_config_pair(
    const std::string& text,
    const std::function<void(const std::string& key,
                             const std::string& value)>& handler) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    handler(key, value);
  }
}

double config_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad number '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config key " + key + ": bad number '" + value + "'");
  return v;
}

std::size_t config_size(const std::string& key, const std::string& value) {
  const double v = config_double(key, value);
  if (v < 0 || v != std::floor(v))
    throw ConfigError("config key " + key + ": expected an integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t config_u64(const std::string& key, const std::string& value) {
  if (value.empty() || value[0] == '-' || value[0] == '+')
    throw ConfigError("config key " + key + ": expected an unsigned integer");
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used, 10);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": expected an unsigned integer");
  }
  if (used != value.size())
    throw ConfigError("config key " + key + ": expected an unsigned integer");
  return v;
}

std::vector<std::size_t> config_size_list(const std::string& key,
                                          const std::string& value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = value.find(',', start);
    const std::string piece =
        trim(value.substr(start, comma == std::string::npos
                                     ? std::string::npos
                                     : comma - start));
    if (piece.empty())
      throw ConfigError("config key " + key + ": empty list entry");
    out.push_back(config_size(key, piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_size_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path);
}

}  // namespace rgn
