#include "webtrap/util/clock.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

namespace webtrap::util {

double unix_now() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string iso8601_utc(double unix_seconds) {
    auto t = static_cast<std::time_t>(std::floor(unix_seconds));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace webtrap::util
