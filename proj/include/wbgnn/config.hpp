#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace wbgnn {

// Flat key-value config: one `key = value` per line, `#` comments blank
// lines allowed. Serialization is sorted by key and round-trips doubles
// exactly, so emitted files are byte-stable.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool dflt) const;

  void set_str(const std::string& key, const std::string& v) { kv_[key] = v; }
  void set_int(const std::string& key, int64_t v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  std::string serialize() const;
  void write_file(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

std::string format_double(double v);  // shortest exact round-trip form

}  // namespace wbgnn
