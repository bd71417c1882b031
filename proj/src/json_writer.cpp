#include "kellynet/json_writer.hpp"

#include <cmath>
#include <cstdio>

namespace kellynet {

std::string format_double(double value) {
  if (!std::isfinite(value)) return "null";  // reports never carry non-finite values
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string csv_field(double value) { return format_double(value); }

void JsonWriter::newline_indent() {
  if (indent_ < 0) return;
  os_ << '\n';
  for (std::size_t i = 0; i < stack_.size() * static_cast<std::size_t>(indent_); ++i) os_ << ' ';
}

void JsonWriter::before_item() {
  if (key_pending_) {
    key_pending_ = false;
    return;
  }
  if (!stack_.empty()) {
    if (stack_.back().items > 0) os_ << ',';
    newline_indent();
    ++stack_.back().items;
  }
}

JsonWriter& JsonWriter::begin_object() {
  before_item();
  os_ << '{';
  stack_.push_back({true, 0});
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  bool had_items = stack_.back().items > 0;
  stack_.pop_back();
  if (had_items) newline_indent();
  os_ << '}';
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  before_item();
  os_ << '[';
  stack_.push_back({false, 0});
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  bool had_items = stack_.back().items > 0;
  stack_.pop_back();
  if (had_items) newline_indent();
  os_ << ']';
  return *this;
}

JsonWriter& JsonWriter::key(std::string_view name) {
  if (stack_.back().items > 0) os_ << ',';
  newline_indent();
  ++stack_.back().items;
  os_ << '"';
  write_escaped(name);
  os_ << '"' << ':';
  if (indent_ >= 0) os_ << ' ';
  key_pending_ = true;
  return *this;
}

JsonWriter& JsonWriter::value(double v) {
  before_item();
  os_ << format_double(v);
  return *this;
}

JsonWriter& JsonWriter::value(bool v) {
  before_item();
  os_ << (v ? "true" : "false");
  return *this;
}

JsonWriter& JsonWriter::value(int v) {
  before_item();
  os_ << v;
  return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
  before_item();
  os_ << v;
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
  before_item();
  os_ << v;
  return *this;
}

JsonWriter& JsonWriter::value(std::string_view v) {
  before_item();
  os_ << '"';
  write_escaped(v);
  os_ << '"';
  return *this;
}

JsonWriter& JsonWriter::null() {
  before_item();
  os_ << "null";
  return *this;
}

void JsonWriter::write_escaped(std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '"': os_ << "\\\""; break;
      case '\\': os_ << "\\\\"; break;
      case '\n': os_ << "\\n"; break;
      case '\t': os_ << "\\t"; break;
      case '\r': os_ << "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          os_ << buf;
        } else {
          os_ << c;
        }
    }
  }
}

}  // namespace kellynet
