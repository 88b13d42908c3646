#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace webtrap::util {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

// Case-insensitive substring search. Returns npos when absent.
std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t from = 0);
inline bool icontains(std::string_view haystack, std::string_view needle) {
    return ifind(haystack, needle) != std::string_view::npos;
}
bool istarts_with(std::string_view s, std::string_view prefix);
bool iends_with(std::string_view s, std::string_view suffix);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

inline bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}
inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace webtrap::util
