#pragma once

// Run configuration: a flat key-value store parsed from a line-oriented file
// ("section.key = value", '#' comments). Unknown keys are rejected against a
// schema before use, and the hash of the effective config is embedded in
// every artifact directory so mismatched resumption can be refused.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace repose::core {

class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  int64_t get_i64(const std::string& key, int64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  // Throws std::invalid_argument naming every key not in the schema.
  void validate(const std::set<std::string>& schema) const;

  // FNV-1a over the canonical "key=value\n" serialization (keys sorted).
  uint64_t hash() const;
  std::string hash_hex() const;
  std::string serialize() const;

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace repose::core
