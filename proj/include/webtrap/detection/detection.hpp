#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace webtrap::detection {

struct KnownBot {
    std::string ua_substring;
    std::string hostname_suffix;
};

// Bot knowledge base: lines of `ua_substring<TAB>hostname_suffix`; '#'
// starts a comment line.
class KnownBots {
public:
    KnownBots() = default;
    explicit KnownBots(std::vector<KnownBot> entries) : entries_(std::move(entries)) {}

    // Throws std::invalid_argument with the line number on malformed input.
    static KnownBots parse(std::string_view text);
    static KnownBots load(const std::string& path);
    // The list shipped in fixtures/known_bots.txt.
    static const KnownBots& shipped();

    bool ua_matches(std::string_view user_agent) const;
    // hostname ends with a suffix belonging to an entry whose UA matched
    bool hostname_matches_for_ua(std::string_view user_agent, std::string_view hostname) const;
    bool hostname_matches_any(std::string_view hostname) const;

    const std::vector<KnownBot>& entries() const { return entries_; }

private:
    std::vector<KnownBot> entries_;
};

// Case-insensitive, dot-bounded suffix test ("crawl-1.googlebot.com" ends
// with "googlebot.com", "evilgooglebot.com" does not).
bool hostname_has_suffix(std::string_view hostname, std::string_view suffix);

struct SessionFeatures {
    bool has_attack = false;
    std::int64_t request_count = 1;
    double duration_seconds = 0;
    std::string user_agent;
    std::optional<std::string> peer_hostname;
    std::int64_t hidden_link_hits = 0;
    bool robots_fetched = false;
};

struct Thresholds {
    std::int64_t min_requests = 100;  // strictly more than this
    double max_duration = 10;         // strictly less than this
};

struct OwnerConfidence {
    double attacker = 0;
    double crawler = 0;
    double tool = 0;
    double user = 0;
    bool operator==(const OwnerConfidence&) const = default;
};

// Attack names that count towards has_attack (everything but xss, index
// and unknown).
bool counts_as_attack(std::string_view attack_name);

bool bot_gate(const SessionFeatures& f, const Thresholds& t);

double classify_attacker(const SessionFeatures& f, const KnownBots& bots, const Thresholds& t = {});
std::pair<double, double> classify_crawler_tool(const SessionFeatures& f, const KnownBots& bots,
                                                const Thresholds& t = {});
OwnerConfidence classify_owner(const SessionFeatures& f, const KnownBots& bots, const Thresholds& t = {});

using ReverseResolver = std::function<std::optional<std::string>(const std::string& ip)>;

// getnameinfo(NI_NAMEREQD) on the address.
ReverseResolver system_resolver();

// Runs resolver on a detached thread; nullopt when it fails or takes
// longer than timeout.
std::optional<std::string> reverse_dns(const std::string& ip, std::chrono::milliseconds timeout = std::chrono::seconds(1),
                                       const ReverseResolver& resolver = system_resolver());

}  // namespace webtrap::detection
