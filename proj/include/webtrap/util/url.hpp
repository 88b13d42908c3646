#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace webtrap::util {

// Decodes %XX escapes exactly once. Malformed escapes are kept verbatim.
// With plus_as_space, '+' decodes to ' ' (form/query encoding).
std::string percent_decode(std::string_view s, bool plus_as_space = false);

// Escapes everything outside the RFC 3986 unreserved set, except the
// characters listed in keep.
std::string percent_encode(std::string_view s, std::string_view keep = "");

using QueryParams = std::vector<std::pair<std::string, std::string>>;

// Splits an application/x-www-form-urlencoded string, decoding each name
// and value once.
QueryParams parse_query(std::string_view query);

// Splits "path?query#frag" into its path and query parts (fragment dropped).
std::pair<std::string_view, std::string_view> split_target(std::string_view target);

}  // namespace webtrap::util
