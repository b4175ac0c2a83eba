#include "deepq/text.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <unordered_map>

namespace deepq::text {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string to_ascii_digits(std::string_view s) {
    // U+06F0..U+06F9 encode as DB B0..DB B9; U+0660..U+0669 as D9 A0..D9 A9.
    // U+066B (decimal separator) is D9 AB, U+066C (thousands separator) D9 AC.
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto lead = static_cast<unsigned char>(s[i]);
        if (i + 1 < s.size()) {
            auto next = static_cast<unsigned char>(s[i + 1]);
            if (lead == 0xDB && next >= 0xB0 && next <= 0xB9) {
                out.push_back(static_cast<char>('0' + (next - 0xB0)));
                ++i;
                continue;
            }
            if (lead == 0xD9 && next >= 0xA0 && next <= 0xA9) {
                out.push_back(static_cast<char>('0' + (next - 0xA0)));
                ++i;
                continue;
            }
            if (lead == 0xD9 && next == 0xAB) {
                out.push_back('.');
                ++i;
                continue;
            }
            if (lead == 0xD9 && next == 0xAC) {
                out.push_back(',');
                ++i;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

std::string to_persian_digits(std::string_view s) {
    std::string out;
    out.reserve(s.size() * 2);
    for (char c : s) {
        if (c >= '0' && c <= '9') {
            out.push_back(static_cast<char>(0xDB));
            out.push_back(static_cast<char>(0xB0 + (c - '0')));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<std::string> digit_sequences(std::string_view s) {
    std::string ascii = to_ascii_digits(s);
    std::vector<std::string> out;
    std::string current;
    for (char c : ascii) {
        if (c >= '0' && c <= '9') {
            current.push_back(c);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

bool is_language_tag(std::string_view tag) {
    static const std::regex kTag("^[A-Za-z]{2,3}(-[A-Za-z0-9]{2,8})*$");
    return std::regex_match(tag.begin(), tag.end(), kTag);
}

std::string language_name(std::string_view tag) {
    static const std::unordered_map<std::string, std::string> kNames = {
        {"ar", "Arabic"},  {"de", "German"},  {"en", "English"}, {"es", "Spanish"},
        {"fa", "Persian"}, {"fr", "French"},  {"hi", "Hindi"},   {"it", "Italian"},
        {"ja", "Japanese"}, {"ko", "Korean"}, {"pt", "Portuguese"}, {"ru", "Russian"},
        {"tr", "Turkish"}, {"zh", "Chinese"},
    };
    std::string primary = to_lower_ascii(tag.substr(0, tag.find('-')));
    if (auto it = kNames.find(primary); it != kNames.end()) return it->second;
    return std::string(tag);
}

}  // namespace deepq::text
