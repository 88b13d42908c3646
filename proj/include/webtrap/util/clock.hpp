#pragma once

#include <string>

namespace webtrap::util {

// Seconds since the Unix epoch, sub-second precision.
double unix_now();

// "2020-07-09T23:41:39Z" style UTC timestamp.
std::string iso8601_utc(double unix_seconds);

}  // namespace webtrap::util
