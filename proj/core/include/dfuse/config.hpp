#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfuse {

// Flat key = value configuration. Lines starting with '#' are comments.
// Keys are normalized so "frames-per-video" and "frames_per_video" agree.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  static std::string normalize_key(std::string_view key);

  void set(std::string_view key, std::string value);
  bool has(std::string_view key) const;

  // Typed getters record the key as consumed; malformed values throw UsageError.
  std::string get_string(std::string_view key, std::string_view fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Required variant; throws UsageError naming the key.
  std::string require_string(std::string_view key) const;

  // Keys never read by a getter. Commands use this to reject typos.
  std::vector<std::string> unused_keys() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Parsed command line: positional words and --key value overrides.
struct CommandLine {
  std::vector<std::string> positional;
  KeyValueConfig flags;
};

// "--key value" and "--key=value" both accepted. Throws UsageError on a flag
// missing its value.
CommandLine parse_command_line(std::span<const std::string> args);

}  // namespace dfuse
