#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "webtrap/detection/detection.hpp"

namespace webtrap::analysis {

using json = nlohmann::json;

class EventError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One observed HTTP request, as sent by the surface server. `path` is the
// raw request target (path plus query, still percent-encoded); post_data
// values are already form-decoded; cookie values are raw.
struct HttpEvent {
    std::string method = "GET";
    std::string path = "/";
    std::map<std::string, std::string> headers;
    std::map<std::string, std::string> cookies;
    std::map<std::string, std::string> post_data;
    std::string peer_ip;
    int peer_port = 0;
    std::optional<std::string> uuid;
    double timestamp = 0;

    // Throws EventError on schema violations.
    static HttpEvent from_json(const json& j);
    json to_json() const;

    std::string user_agent() const;
    // path without the query string, percent-decoded once
    std::string decoded_path() const;
    // query parameters, percent-decoded once ('+' as space)
    std::vector<std::pair<std::string, std::string>> query_params() const;
};

struct PathVisit {
    std::string path;
    double timestamp = 0;
    std::string attack;
};

struct Session {
    std::string uuid;
    std::string ip;
    int port = 0;
    std::vector<std::string> user_agents;  // first-seen order, unique
    double start_time = 0;
    double end_time = 0;
    std::int64_t request_count = 0;
    std::vector<PathVisit> paths;
    std::map<std::string, std::int64_t> attack_counts;
    std::map<std::string, std::string> cookies;
    std::int64_t hidden_link_hits = 0;
    bool robots_fetched = false;
    std::vector<std::string> logs;
    std::optional<std::string> peer_hostname;
    std::optional<detection::OwnerConfidence> owners;
    bool finished = false;

    json to_json() const;
    static Session from_json(const json& j);

    detection::SessionFeatures features() const;
};

enum class VerdictType { plain_page = 1, inject = 2, error = 3 };

struct Verdict {
    std::string sess_uuid;
    VerdictType type = VerdictType::plain_page;
    std::string name = "index";
    std::optional<std::string> payload;
    bool page = true;

    json to_json() const;
    // Throws EventError on malformed input.
    static Verdict from_json(const json& j);
};

json owners_to_json(const detection::OwnerConfidence& o);

// Directory part of each attacked path ("/a/b.php" -> "/a/"), sorted, unique.
std::vector<std::string> attacked_locations(const Session& s);

// The Table I record for a session.
json session_report(const Session& s);

}  // namespace webtrap::analysis
