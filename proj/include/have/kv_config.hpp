#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace have {

// "key = value" text files. '#' starts a comment; blank lines are ignored.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& origin = "<input>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  const std::string& origin() const noexcept { return origin_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Whitespace- or comma-separated list.
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::uint64_t> get_uints(const std::string& key) const;
  std::vector<std::string> get_words(const std::string& key) const;

  std::vector<std::string> keys() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> entries_;
};

std::vector<std::string> split_list(const std::string& text);

}  // namespace have
