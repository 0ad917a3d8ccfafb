#pragma once

#include <string>
#include <string_view>

namespace riskspan::unicode {

/// Decodes UTF-8. Invalid sequences decode to U+FFFD, one per offending byte.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view codepoints);

/// Number of codepoints `decode_utf8` would produce.
std::size_t codepoint_length(std::string_view bytes);

bool is_space(char32_t cp);
/// Letters and digits. ASCII is exact; beyond ASCII, anything that is not in a
/// known punctuation, symbol, control or whitespace block counts as a letter.
bool is_alnum(char32_t cp);
/// ASCII and Latin-1 uppercase folding; other codepoints unchanged.
char32_t to_lower(char32_t cp);

}  // namespace riskspan::unicode
