#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nerh::text {

inline constexpr char32_t kReplacementChar = 0xFFFD;

/// One decoded code point and the number of bytes it occupied. Invalid or
/// truncated sequences decode as U+FFFD consuming a single byte.
struct Utf8Step {
  char32_t code_point;
  std::size_t length;
  bool valid;
};

Utf8Step decode_utf8(std::string_view s, std::size_t pos);
void append_utf8(std::string& out, char32_t cp);

/// Number of Unicode scalar values; invalid bytes count one each.
std::size_t count_code_points(std::string_view s);

bool is_ascii_space(char c);

/// Trim and collapse runs of ASCII whitespace into a single space.
std::string normalize_whitespace(std::string_view s);

/// Lowercases ASCII letters; other bytes pass through.
std::string ascii_casefold(std::string_view s);

/// Drops trailing ASCII punctuation (".,;:!?").
std::string strip_trailing_punctuation(std::string_view s);

/// normalize_whitespace + casefold + strip_trailing_punctuation.
std::string loose_key(std::string_view s);

/// Byte span [begin, end) of a balanced JSON-looking region.
struct Span {
  std::size_t begin;
  std::size_t end;
};

/// Starting at an opening '{' or '[' at `open`, finds the matching closing
/// bracket, honoring JSON string literals and escapes. Returns nullopt when
/// brackets are unbalanced or mismatched before the end of input.
std::optional<Span> balanced_span(std::string_view s, std::size_t open);

/// Removes a UTF-8 byte-order mark if present.
std::string_view strip_bom(std::string_view s);

}  // namespace nerh::text
