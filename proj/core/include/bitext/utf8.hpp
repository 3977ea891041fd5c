#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace bitext::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

struct Decoded {
    char32_t cp;
    std::size_t length; // bytes consumed, >= 1
};

/// Decodes one scalar value starting at `pos`. Malformed sequences decode
/// to U+FFFD and consume a single byte.
Decoded decode(std::string_view s, std::size_t pos);

/// Number of Unicode scalar values (malformed bytes count one each).
std::size_t length(std::string_view s);

bool is_valid(std::string_view s);

void append(std::string& out, char32_t cp);

bool is_space(char32_t cp);

} // namespace bitext::utf8
