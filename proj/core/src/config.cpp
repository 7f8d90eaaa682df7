#include "dfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "dfuse/errors.hpp"
#include "dfuse/fileio.hpp"

namespace dfuse {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string KeyValueConfig::normalize_key(std::string_view key) {
  std::string k(key);
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    cfg.set(key, std::string(trim(line.substr(eq + 1))));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw UsageError(fmt::format("config file '{}' does not exist", path.string()));
  }
  return parse(read_file(path));
}

void KeyValueConfig::set(std::string_view key, std::string value) {
  values_[normalize_key(key)] = std::move(value);
}

bool KeyValueConfig::has(std::string_view key) const {
  return values_.contains(normalize_key(key));
}

std::string KeyValueConfig::get_string(std::string_view key, std::string_view fallback) const {
  const auto k = normalize_key(key);
  used_.insert(k);
  auto it = values_.find(k);
  return it == values_.end() ? std::string(fallback) : it->second;
}

std::string KeyValueConfig::require_string(std::string_view key) const {
  const auto k = normalize_key(key);
  used_.insert(k);
  auto it = values_.find(k);
  if (it == values_.end()) throw UsageError(fmt::format("missing required option --{}", k));
  return it->second;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
  if (!has(key)) {
    used_.insert(normalize_key(key));
    return fallback;
  }
  const auto s = get_string(key, "");
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError(fmt::format("option {} expects a non-negative integer, got '{}'", key, s));
  }
  return v;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  if (!has(key)) {
    used_.insert(normalize_key(key));
    return fallback;
  }
  const auto s = get_string(key, "");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw UsageError(fmt::format("option {} expects a number, got '{}'", key, s));
  }
  return v;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  if (!has(key)) {
    used_.insert(normalize_key(key));
    return fallback;
  }
  const auto s = get_string(key, "");
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw UsageError(fmt::format("option {} expects true/false, got '{}'", key, s));
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.contains(k)) out.push_back(k);
  return out;
}

CommandLine parse_command_line(std::span<const std::string> args) {
  CommandLine cl;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.size() > 2 && a.starts_with("--")) {
      const auto body = std::string_view(a).substr(2);
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        cl.flags.set(body.substr(0, eq), std::string(body.substr(eq + 1)));
      } else {
        if (i + 1 >= args.size()) throw UsageError(fmt::format("flag {} needs a value", a));
        cl.flags.set(body, args[++i]);
      }
    } else {
      cl.positional.push_back(a);
    }
  }
  return cl;
}

}  // namespace dfuse
