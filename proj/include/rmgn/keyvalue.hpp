#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rmgn {

/// `key = value` text with `#` comments. Keeps source line numbers so that
/// schema errors can point at the offending line.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  int line_of(const std::string& key) const;

  /// Rejects any key not in `allowed` (with its line number).
  void require_known(const std::set<std::string>& allowed) const;

  /// Insertion-ordered writer side.
  void set(const std::string& key, const std::string& value);
  std::string to_string(const std::string& header = {}) const;

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Shortest "%.17g"-style text that reads back to the same double.
std::string format_double(double v);

}  // namespace rmgn
