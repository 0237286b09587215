#ifndef NSG_CORE_CONFIG_HPP
#define NSG_CORE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace nsg {

/// Flat key-value configuration store. The file grammar is a TOML-compatible
/// subset: one `key = value` per line, `#` comments, optional double quotes
/// around values, dotted keys allowed. Later assignments win.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path);
  static Config from_text(const std::string& text);

  void merge_file(const std::filesystem::path& path);

  /// Parses the same grammar from a string; `origin` names the source in
  /// error messages.
  void merge_text(const std::string& text, const std::string& origin = "<text>");

  /// Parse a single "key=value" or "key = value" assignment (CLI override).
  void set_assignment(const std::string& text);

  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

  std::vector<std::string> keys() const;

  /// Throws ConfigError naming the first key not present in `known`.
  void require_known(const std::vector<std::string>& known) const;

  /// Serialize to the same grammar from_file accepts; round-trips exactly.
  std::string to_text() const;

 private:
  void merge_stream(std::istream& in, const std::string& origin);

  std::map<std::string, std::string> kv_;
};

}  // namespace nsg

#endif
