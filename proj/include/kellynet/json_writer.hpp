#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace kellynet {

/// Formats a double with 17 significant digits (round-trip exact for IEEE
/// doubles and byte-stable across runs).
std::string format_double(double value);

/// Minimal streaming JSON writer. All report files go through this so numeric
/// output is byte-deterministic; parsing stays on nlohmann/json.
class JsonWriter {
 public:
  /// indent >= 0 pretty-prints with that many spaces per level; indent < 0
  /// emits a single line.
  explicit JsonWriter(std::ostream& os, int indent = 2) : os_(os), indent_(indent) {}

  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();

  JsonWriter& key(std::string_view name);

  JsonWriter& value(double v);
  JsonWriter& value(bool v);
  JsonWriter& value(int v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(std::string_view v);
  JsonWriter& value(const char* v) { return value(std::string_view(v)); }
  JsonWriter& null();

  /// key + value in one call.
  template <typename T>
  JsonWriter& field(std::string_view name, T v) {
    key(name);
    return value(v);
  }

 private:
  struct Frame {
    bool is_object = false;
    std::size_t items = 0;
  };

  void before_item();
  void newline_indent();
  void write_escaped(std::string_view s);

  std::ostream& os_;
  int indent_;
  std::vector<Frame> stack_;
  bool key_pending_ = false;
};

std::string csv_field(double value);

}  // namespace kellynet
