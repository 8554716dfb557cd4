#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace convkit::text {

/// Unicode NFC normalization of UTF-8 input. Invalid UTF-8 throws convkit::Error.
std::string nfc(std::string_view utf8);

/// Full Unicode case folding (ASCII fast path).
std::string casefold(std::string_view utf8);

std::string_view trim(std::string_view s);

bool is_ascii_space(char c);

std::vector<std::string_view> split(std::string_view s, char sep);

}  // namespace convkit::text
