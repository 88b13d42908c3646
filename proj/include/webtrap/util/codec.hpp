#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace webtrap::util {

std::string base64_encode(std::string_view data);
// nullopt on malformed input.
std::optional<std::string> base64_decode(std::string_view text);

// Lowercase 32-hex MD5 digest.
std::string md5_hex(std::string_view data);

}  // namespace webtrap::util
