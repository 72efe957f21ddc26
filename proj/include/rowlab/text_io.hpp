#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rowlab {

/// Malformed input file. `offset` is the byte offset of the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Whitespace-separated token reader over an in-memory text buffer.
class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : text_(text) {}

  bool at_end();
  std::size_t offset() const { return pos_; }

  std::string_view next_token(std::string_view what);
  void expect(std::string_view literal);
  double next_double(std::string_view what);
  std::uint64_t next_u64(std::string_view what);
  std::size_t next_count(std::string_view what);

  /// Skips spaces and tabs only; returns true at a line break or end of input.
  bool at_line_end();

 private:
  void skip_space();

  std::string_view text_;
  std::size_t pos_ = 0;
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace rowlab
