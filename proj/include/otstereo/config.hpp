#pragma once

#include <map>
#include <string>

#include "otstereo/errors.hpp"

namespace otstereo {

// key = value configuration file, '#' starts a comment. Later assignments
// override earlier ones so CLI overrides can be applied by re-setting keys.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string to_text() const;
  void write_file(const std::string& path) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace otstereo
