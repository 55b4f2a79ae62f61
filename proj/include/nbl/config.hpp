#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace nbl {

// Line-based `key = value` config; '#' starts a comment; blank lines
// ignored. A non-comment line without '=' is an error naming the line.
std::map<std::string, std::string> read_config(const std::string& path);

// Typed lookups with defaults; malformed values throw naming the key.
std::string cfg_str(const std::map<std::string, std::string>& cfg,
                    const std::string& key, const std::string& fallback);
std::uint64_t cfg_u64(const std::map<std::string, std::string>& cfg,
                      const std::string& key, std::uint64_t fallback);
double cfg_double(const std::map<std::string, std::string>& cfg,
                  const std::string& key, double fallback);

}  // namespace nbl
