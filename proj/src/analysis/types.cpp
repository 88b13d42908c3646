#include "webtrap/analysis/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "webtrap/util/clock.hpp"
#include "webtrap/util/strings.hpp"
#include "webtrap/util/url.hpp"
#include "webtrap/util/uuid.hpp"

namespace webtrap::analysis {

namespace {

std::map<std::string, std::string> string_map(const json& j, const char* field) {
    std::map<std::string, std::string> out;
    auto it = j.find(field);
    if (it == j.end() || it->is_null()) return out;
    if (!it->is_object()) throw EventError(std::string("'") + field + "' must be an object");
    for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) throw EventError(std::string("'") + field + "." + k + "' must be a string");
        out[k] = v.get<std::string>();
    }
    return out;
}

std::string required_string(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end() || !it->is_string()) throw EventError(std::string("'") + field + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

HttpEvent HttpEvent::from_json(const json& j) {
    if (!j.is_object()) throw EventError("event must be a JSON object");
    HttpEvent e;
    e.method = required_string(j, "method");
    e.path = required_string(j, "path");
    if (e.method.empty()) throw EventError("'method' is empty");
    if (e.path.empty()) throw EventError("'path' is empty");
    e.headers = string_map(j, "headers");
    e.cookies = string_map(j, "cookies");
    e.post_data = string_map(j, "post_data");

    auto peer = j.find("peer");
    if (peer == j.end() || !peer->is_object()) throw EventError("'peer' must be an object");
    e.peer_ip = required_string(*peer, "ip");
    auto port = peer->find("port");
    if (port == peer->end() || !port->is_number_integer()) throw EventError("'peer.port' must be an integer");
    e.peer_port = port->get<int>();
    if (e.peer_port < 0 || e.peer_port > 65535) throw EventError("'peer.port' out of range");

    auto uuid = j.find("uuid");
    if (uuid != j.end() && !uuid->is_null()) {
        if (!uuid->is_string()) throw EventError("'uuid' must be a string or null");
        e.uuid = uuid->get<std::string>();
    }
    auto ts = j.find("timestamp");
    if (ts == j.end() || !ts->is_number()) throw EventError("'timestamp' must be a number");
    e.timestamp = ts->get<double>();
    if (!std::isfinite(e.timestamp) || e.timestamp < 0) throw EventError("'timestamp' out of range");
    return e;
}

json HttpEvent::to_json() const {
    return {
        {"method", method},
        {"path", path},
        {"headers", headers},
        {"cookies", cookies},
        {"post_data", post_data},
        {"peer", {{"ip", peer_ip}, {"port", peer_port}}},
        {"uuid", uuid ? json(*uuid) : json(nullptr)},
        {"timestamp", timestamp},
    };
}

std::string HttpEvent::user_agent() const {
    for (const auto& [k, v] : headers) {
        if (util::iequals(k, "user-agent")) return v;
    }
    return {};
}

std::string HttpEvent::decoded_path() const {
    return util::percent_decode(util::split_target(path).first);
}

std::vector<std::pair<std::string, std::string>> HttpEvent::query_params() const {
    return util::parse_query(util::split_target(path).second);
}

json owners_to_json(const detection::OwnerConfidence& o) {
    return {{"attacker", o.attacker}, {"crawler", o.crawler}, {"tool", o.tool}, {"user", o.user}};
}

json Session::to_json() const {
    json visits = json::array();
    for (const auto& v : paths) visits.push_back({{"path", v.path}, {"timestamp", v.timestamp}, {"attack", v.attack}});
    json j = {
        {"uuid", uuid},
        {"ip", ip},
        {"port", port},
        {"user_agents", user_agents},
        {"start_time", start_time},
        {"end_time", end_time},
        {"request_count", request_count},
        {"paths", visits},
        {"attack_counts", attack_counts},
        {"cookies", cookies},
        {"hidden_link_hits", hidden_link_hits},
        {"robots_fetched", robots_fetched},
        {"logs", logs},
        {"peer_hostname", peer_hostname ? json(*peer_hostname) : json(nullptr)},
        {"owners", owners ? owners_to_json(*owners) : json(nullptr)},
        {"finished", finished},
    };
    return j;
}

Session Session::from_json(const json& j) {
    Session s;
    s.uuid = j.at("uuid").get<std::string>();
    s.ip = j.value("ip", "");
    s.port = j.value("port", 0);
    s.user_agents = j.value("user_agents", std::vector<std::string>{});
    s.start_time = j.value("start_time", 0.0);
    s.end_time = j.value("end_time", 0.0);
    s.request_count = j.value("request_count", std::int64_t{0});
    for (const auto& v : j.value("paths", json::array())) {
        s.paths.push_back({v.value("path", ""), v.value("timestamp", 0.0), v.value("attack", "")});
    }
    s.attack_counts = j.value("attack_counts", std::map<std::string, std::int64_t>{});
    s.cookies = j.value("cookies", std::map<std::string, std::string>{});
    s.hidden_link_hits = j.value("hidden_link_hits", std::int64_t{0});
    s.robots_fetched = j.value("robots_fetched", false);
    s.logs = j.value("logs", std::vector<std::string>{});
    if (auto h = j.find("peer_hostname"); h != j.end() && h->is_string()) s.peer_hostname = h->get<std::string>();
    if (auto o = j.find("owners"); o != j.end() && o->is_object()) {
        s.owners = detection::OwnerConfidence{o->value("attacker", 0.0), o->value("crawler", 0.0),
                                              o->value("tool", 0.0), o->value("user", 0.0)};
    }
    s.finished = j.value("finished", false);
    return s;
}

detection::SessionFeatures Session::features() const {
    detection::SessionFeatures f;
    for (const auto& [name, count] : attack_counts) {
        if (count > 0 && detection::counts_as_attack(name)) f.has_attack = true;
    }
    f.request_count = std::max<std::int64_t>(request_count, 1);
    f.duration_seconds = std::max(0.0, end_time - start_time);
    f.user_agent = user_agents.empty() ? "" : user_agents.front();
    f.peer_hostname = peer_hostname;
    f.hidden_link_hits = hidden_link_hits;
    f.robots_fetched = robots_fetched;
    return f;
}

json Verdict::to_json() const {
    return {
        {"sess_uuid", sess_uuid},
        {"detection",
         {{"type", static_cast<int>(type)}, {"name", name}, {"payload", payload ? json(*payload) : json(nullptr)},
          {"page", page}}},
    };
}

Verdict Verdict::from_json(const json& j) {
    if (!j.is_object()) throw EventError("verdict must be an object");
    Verdict v;
    v.sess_uuid = required_string(j, "sess_uuid");
    auto det = j.find("detection");
    if (det == j.end() || !det->is_object()) throw EventError("'detection' must be an object");
    auto type = det->find("type");
    if (type == det->end() || !type->is_number_integer()) throw EventError("'detection.type' must be an integer");
    int t = type->get<int>();
    if (t < 1 || t > 3) throw EventError("'detection.type' out of range");
    v.type = static_cast<VerdictType>(t);
    v.name = det->value("name", "");
    auto payload = det->find("payload");
    if (payload != det->end() && payload->is_string()) v.payload = payload->get<std::string>();
    v.page = det->value("page", true);
    return v;
}

std::vector<std::string> attacked_locations(const Session& s) {
    std::set<std::string> dirs;
    for (const auto& v : s.paths) {
        if (v.attack.empty() || v.attack == "index" || v.attack == "unknown") continue;
        auto path = std::string(util::split_target(v.path).first);
        auto slash = path.rfind('/');
        dirs.insert(slash == std::string::npos ? "/" : path.substr(0, slash + 1));
    }
    return {dirs.begin(), dirs.end()};
}

json session_report(const Session& s) {
    json attack_types = json::array();
    for (const auto& [name, count] : s.attack_counts) {
        if (count > 0) attack_types.push_back(name);
    }
    double duration = std::max(0.0, s.end_time - s.start_time);
    detection::OwnerConfidence owners = s.owners.value_or(detection::OwnerConfidence{0, 0, 0, 1});
    return {
        {"UUID", s.uuid},
        {"IP address", s.ip},
        {"Location", attacked_locations(s)},
        {"Port", s.port},
        {"User Agents", s.user_agents},
        {"Attack Types", attack_types},
        {"Possible owners", owners_to_json(owners)},
        {"Start time", util::iso8601_utc(s.start_time)},
        {"End time", util::iso8601_utc(s.end_time)},
        {"Requests", s.request_count},
        {"Request rate", duration > 0 ? static_cast<double>(s.request_count) / duration
                                      : static_cast<double>(s.request_count)},
        {"Status", s.finished ? "finished" : "active"},
    };
}

}  // namespace webtrap::analysis
