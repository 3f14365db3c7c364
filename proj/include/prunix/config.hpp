#pragma once

#include <map>
#include <string>
#include <vector>

namespace prunix {

// Flat "key = value" config file with '#' comments. Keys are dotted names
// (regularizer.lambda_s, quant.bits, ...). Lookups with a default never
// throw; typed lookups throw ConfigError on unparsable values.
class Config {
 public:
  static Config load(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }

  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> num_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace prunix
