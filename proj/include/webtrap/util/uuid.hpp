#pragma once

#include <string>
#include <string_view>

namespace webtrap::util {

// Random (version 4, RFC 4122 variant) uuid in canonical lowercase form.
std::string make_uuid_v4();

bool is_uuid_v4(std::string_view s);

}  // namespace webtrap::util
