#include "aim/config_file.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace aim {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::unordered_map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string s = trim(raw);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    check(eq != std::string::npos,
          "config: line " + std::to_string(line) + ": expected key=value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    check(!key.empty(), "config: line " + std::to_string(line) + ": empty key");
    auto [it, fresh] = seen.emplace(key, line);
    check(fresh, "config: line " + std::to_string(line) + ": duplicate key '" +
                     key + "' (first set on line " +
                     std::to_string(it->second) + ")");
    out.push_back({key, value, line});
  }
  return out;
}

std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace aim
