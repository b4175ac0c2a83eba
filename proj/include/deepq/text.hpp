#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace deepq::text {

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

// Runs of ASCII whitespace become a single space; ends are trimmed.
std::string collapse_whitespace(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Maps Extended Arabic-Indic (Persian) and Arabic-Indic digits to ASCII,
// and the Arabic decimal/thousands separators to '.' and ','.
std::string to_ascii_digits(std::string_view s);
// Inverse on digit characters: ASCII digits become Persian digits.
std::string to_persian_digits(std::string_view s);

// Maximal runs of digits, after digit normalization.
std::vector<std::string> digit_sequences(std::string_view s);

bool is_language_tag(std::string_view tag);
// Human-readable language name for prompt directives ("fa" -> "Persian").
std::string language_name(std::string_view tag);

}  // namespace deepq::text
