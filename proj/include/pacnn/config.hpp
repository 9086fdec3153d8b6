#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace pacnn {

// Plain "key = value" files: one pair per line, '#' starts a comment,
// blank lines ignored. Duplicate keys are an error. Readers mark keys as
// consumed; check_all_consumed() then rejects typos and stale keys.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  double get_real(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;
  // Comma-separated integers, e.g. "16,32,64,64".
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& def) const;

  void set(const std::string& key, const std::string& value);

  // Throws ConfigError naming the first key nobody read.
  void check_all_consumed() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string require(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
  std::string origin_ = "<empty>";
};

}  // namespace pacnn
