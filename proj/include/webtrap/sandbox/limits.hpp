#pragma once

#include <chrono>
#include <cstddef>

namespace webtrap::sandbox {

inline constexpr std::size_t kXmlExpansionLimit = 64 * 1024;
inline constexpr int kXmlDepthLimit = 16;
inline constexpr std::size_t kSqlRenderLimit = 256 * 1024;
// Cap for every other simulated output (shell, template, php).
inline constexpr std::size_t kOutputLimit = 64 * 1024;

inline constexpr std::chrono::milliseconds kDefaultTimeout{2000};

class Deadline {
public:
    using clock = std::chrono::steady_clock;

    explicit Deadline(std::chrono::milliseconds budget = kDefaultTimeout) : end_(clock::now() + budget) {}

    bool expired() const { return clock::now() >= end_; }

private:
    clock::time_point end_;
};

}  // namespace webtrap::sandbox
