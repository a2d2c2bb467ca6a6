#pragma once

#include <string>
#include <vector>

#include "aim/common.hpp"

namespace aim {

// One key=value assignment from a run-config file, with the 1-based line it
// came from so later validation can point back at the source.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

// Parses the key=value config dialect: one assignment per line, '#' starts a
// comment, blank lines are ignored, whitespace around keys and values is
// trimmed. Rejects lines without '=', empty keys, and duplicate keys. This
// layer is syntax-only; whether a key is meaningful is the caller's problem.
std::vector<ConfigEntry> parse_config_text(const std::string& text);

std::vector<ConfigEntry> read_config_file(const std::string& path);

}  // namespace aim
