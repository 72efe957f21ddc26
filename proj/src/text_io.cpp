#include "rowlab/text_io.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace rowlab {

void TokenReader::skip_space() {
  while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
}

bool TokenReader::at_end() {
  skip_space();
  return pos_ >= text_.size();
}

bool TokenReader::at_line_end() {
  while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) {
    ++pos_;
  }
  return pos_ >= text_.size() || text_[pos_] == '\n';
}

std::string_view TokenReader::next_token(std::string_view what) {
  skip_space();
  if (pos_ >= text_.size()) {
    throw ParseError("unexpected end of input, expected " + std::string(what), pos_);
  }
  const std::size_t start = pos_;
  while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  return text_.substr(start, pos_ - start);
}

void TokenReader::expect(std::string_view literal) {
  skip_space();
  const std::size_t start = pos_;
  const auto token = next_token(literal);
  if (token != literal) {
    throw ParseError("expected '" + std::string(literal) + "', found '" + std::string(token) + "'",
                     start);
  }
}

double TokenReader::next_double(std::string_view what) {
  skip_space();
  const std::size_t start = pos_;
  const auto token = next_token(what);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw ParseError("invalid number for " + std::string(what) + ": '" + std::string(token) + "'",
                     start);
  }
  return value;
}

std::uint64_t TokenReader::next_u64(std::string_view what) {
  skip_space();
  const std::size_t start = pos_;
  const auto token = next_token(what);
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw ParseError("invalid integer for " + std::string(what) + ": '" + std::string(token) + "'",
                     start);
  }
  return value;
}

std::size_t TokenReader::next_count(std::string_view what) {
  return static_cast<std::size_t>(next_u64(what));
}

std::string format_double(double value) {
  char buffer[64];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, end);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace rowlab
