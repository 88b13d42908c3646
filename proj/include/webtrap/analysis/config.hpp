#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "webtrap/detection/detection.hpp"
#include "webtrap/sandbox/sandbox.hpp"

namespace webtrap::analysis {

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string source, std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Settings of the analysis service. The config file is `key = value`
// lines; '#' starts a comment.
//
//   sqli.template          query with a {payload} placeholder
//   xxe.oob_enabled        true|false
//   xxe.collector          host:port of the OOB collector listener
//   rfi.fetch_enabled      true|false
//   sandbox.backend        simulated|container
//   sandbox.docker_socket  container runtime socket path
//   sandbox.seed           dummy database seed
//   session.idle_timeout   seconds
//   session.sweep_interval seconds
//   session.reverse_dns    true|false
//   store.backend          embedded|redis
//   store.snapshot         JSON-lines snapshot path (embedded)
//   store.redis            host:port (redis)
//   detection.known_bots   path of a known-bots file
//   detection.min_requests bot gate: request count must exceed this
//   detection.max_duration bot gate: duration must be below this (seconds)
//   manifest               meta.json of the clone; its paths are "index" pages
//   hidden_link            hidden link token path
struct AnalysisConfig {
    std::string sqli_template = "SELECT * FROM users WHERE username='{payload}'";
    bool xxe_oob_enabled = false;
    std::string xxe_collector = "127.0.0.1:8091";
    bool rfi_fetch_enabled = false;
    sandbox::Backend backend = sandbox::Backend::simulated;
    std::string docker_socket = "/var/run/docker.sock";
    std::uint32_t seed = 1337;
    std::chrono::milliseconds idle_timeout = std::chrono::seconds(75);
    std::chrono::milliseconds sweep_interval = std::chrono::seconds(10);
    bool reverse_dns = true;
    std::string store_backend = "embedded";
    std::optional<std::filesystem::path> snapshot;
    std::string redis_address = "127.0.0.1:6379";
    std::optional<std::filesystem::path> known_bots;
    detection::Thresholds thresholds;
    std::set<std::string> known_pages = {"/"};
    std::string hidden_link = "/s3cr3t-trap";
};

// Throws ConfigError naming source and line.
AnalysisConfig parse_config(std::string_view text, const std::string& source = "<config>");
AnalysisConfig load_config(const std::filesystem::path& path);

// Page paths recorded in a clone's meta.json.
std::set<std::string> load_manifest_paths(const std::filesystem::path& meta_json);

// "host:port" -> (host, port). Throws std::invalid_argument.
std::pair<std::string, int> split_host_port(std::string_view address, int default_port);

}  // namespace webtrap::analysis
