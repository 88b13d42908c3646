#include "webtrap/detection/detection.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "webtrap/sandbox/fixture_data.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::detection {

KnownBots KnownBots::parse(std::string_view text) {
    std::vector<KnownBot> entries;
    std::size_t line_no = 0;
    for (const auto& raw : util::split(text, '\n')) {
        ++line_no;
        auto line = util::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw std::invalid_argument("known bots line " + std::to_string(line_no) + ": expected a tab separator");
        }
        auto ua = util::trim(line.substr(0, tab));
        auto host = util::trim(line.substr(tab + 1));
        if (ua.empty() || host.empty()) {
            throw std::invalid_argument("known bots line " + std::to_string(line_no) + ": empty field");
        }
        entries.push_back({std::string(ua), std::string(host)});
    }
    return KnownBots(std::move(entries));
}

KnownBots KnownBots::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read known bots file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const KnownBots& KnownBots::shipped() {
    static const KnownBots bots = parse(fixtures::embedded_file("known_bots.txt").value_or(""));
    return bots;
}

bool hostname_has_suffix(std::string_view hostname, std::string_view suffix) {
    while (!hostname.empty() && hostname.back() == '.') hostname.remove_suffix(1);
    while (!suffix.empty() && suffix.front() == '.') suffix.remove_prefix(1);
    if (suffix.empty() || !util::iends_with(hostname, suffix)) return false;
    return hostname.size() == suffix.size() || hostname[hostname.size() - suffix.size() - 1] == '.';
}

bool KnownBots::ua_matches(std::string_view user_agent) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const KnownBot& b) { return util::icontains(user_agent, b.ua_substring); });
}

bool KnownBots::hostname_matches_for_ua(std::string_view user_agent, std::string_view hostname) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const KnownBot& b) {
        return util::icontains(user_agent, b.ua_substring) && hostname_has_suffix(hostname, b.hostname_suffix);
    });
}

bool KnownBots::hostname_matches_any(std::string_view hostname) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const KnownBot& b) { return hostname_has_suffix(hostname, b.hostname_suffix); });
}

bool counts_as_attack(std::string_view name) {
    return name == "lfi" || name == "rfi" || name == "xxe_injection" || name == "sqli" || name == "cmd_exec" ||
           name == "template_injection" || name == "php_object_injection" || name == "php_code_injection";
}

bool bot_gate(const SessionFeatures& f, const Thresholds& t) {
    return f.request_count > t.min_requests && f.duration_seconds < t.max_duration;
}

double classify_attacker(const SessionFeatures& f, const KnownBots& bots, const Thresholds& t) {
    if (f.has_attack) return 1.0;
    if (bot_gate(f, t)) {
        if (bots.ua_matches(f.user_agent)) {
            bool verified = f.peer_hostname && bots.hostname_matches_for_ua(f.user_agent, *f.peer_hostname);
            return verified ? 0.25 : 0.75;
        }
        if (f.hidden_link_hits > 0) return 0.5;
    }
    return 0.0;
}

std::pair<double, double> classify_crawler_tool(const SessionFeatures& f, const KnownBots& bots, const Thresholds& t) {
    if (f.robots_fetched) return {1.0, 0.0};
    if (bot_gate(f, t)) {
        if (bots.ua_matches(f.user_agent)) return {0.85, 0.15};
        if (f.peer_hostname && bots.hostname_matches_any(*f.peer_hostname)) return {0.75, 0.15};
    }
    return {0.0, 0.0};
}

OwnerConfidence classify_owner(const SessionFeatures& f, const KnownBots& bots, const Thresholds& t) {
    OwnerConfidence out;
    out.attacker = classify_attacker(f, bots, t);
    std::tie(out.crawler, out.tool) = classify_crawler_tool(f, bots, t);
    out.user = std::clamp(1.0 - std::max({out.attacker, out.crawler, out.tool}), 0.0, 1.0);
    return out;
}

ReverseResolver system_resolver() {
    return [](const std::string& ip) -> std::optional<std::string> {
        sockaddr_storage storage{};
        socklen_t len = 0;
        auto* v4 = reinterpret_cast<sockaddr_in*>(&storage);
        auto* v6 = reinterpret_cast<sockaddr_in6*>(&storage);
        if (inet_pton(AF_INET, ip.c_str(), &v4->sin_addr) == 1) {
            v4->sin_family = AF_INET;
            len = sizeof(sockaddr_in);
        } else if (inet_pton(AF_INET6, ip.c_str(), &v6->sin6_addr) == 1) {
            v6->sin6_family = AF_INET6;
            len = sizeof(sockaddr_in6);
        } else {
            return std::nullopt;
        }
        char host[NI_MAXHOST];
        if (getnameinfo(reinterpret_cast<sockaddr*>(&storage), len, host, sizeof host, nullptr, 0, NI_NAMEREQD) != 0) {
            return std::nullopt;
        }
        return std::string(host);
    };
}

std::optional<std::string> reverse_dns(const std::string& ip, std::chrono::milliseconds timeout,
                                       const ReverseResolver& resolver) {
    auto promise = std::make_shared<std::promise<std::optional<std::string>>>();
    auto future = promise->get_future();
    // detached so that a hung resolver cannot hold up finalization
    std::thread([promise, ip, resolver] {
        try {
            promise->set_value(resolver(ip));
        } catch (...) {
            promise->set_value(std::nullopt);
        }
    }).detach();
    if (future.wait_for(timeout) != std::future_status::ready) return std::nullopt;
    return future.get();
}

}  // namespace webtrap::detection
