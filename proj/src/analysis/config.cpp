#include "webtrap/analysis/config.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

#include "webtrap/util/strings.hpp"

namespace webtrap::analysis {

ConfigError::ConfigError(std::string source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

namespace {

bool parse_bool(std::string_view v, bool& out) {
    std::string s = util::to_lower(v);
    if (s == "true" || s == "yes" || s == "on" || s == "1") {
        out = true;
        return true;
    }
    if (s == "false" || s == "no" || s == "off" || s == "0") {
        out = false;
        return true;
    }
    return false;
}

template <typename T>
bool parse_number(std::string_view v, T& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc{} && p == v.data() + v.size();
}

bool parse_seconds(std::string_view v, std::chrono::milliseconds& out) {
    double seconds = 0;
    if (!parse_number(v, seconds) || seconds <= 0) return false;
    out = std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000));
    return out.count() > 0;
}

}  // namespace

std::pair<std::string, int> split_host_port(std::string_view address, int default_port) {
    std::string_view host = address;
    int port = default_port;
    auto colon = address.rfind(':');
    auto bracket = address.rfind(']');
    if (colon != std::string_view::npos && (bracket == std::string_view::npos || colon > bracket)) {
        host = address.substr(0, colon);
        if (!parse_number(address.substr(colon + 1), port) || port < 0 || port > 65535) {
            throw std::invalid_argument("invalid port in '" + std::string(address) + "'");
        }
    }
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    if (host.empty()) host = "0.0.0.0";
    return {std::string(host), port};
}

AnalysisConfig parse_config(std::string_view text, const std::string& source) {
    AnalysisConfig cfg;
    std::size_t line_no = 0;
    std::optional<std::filesystem::path> manifest;
    std::size_t manifest_line = 0;
    for (const auto& raw : util::split(text, '\n')) {
        ++line_no;
        auto line = util::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source, line_no, "expected 'key = value'");
        std::string key(util::trim(line.substr(0, eq)));
        std::string value(util::trim(line.substr(eq + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        auto bad = [&](const std::string& what) { throw ConfigError(source, line_no, key + ": " + what); };

        if (key == "sqli.template") {
            if (value.find("{payload}") == std::string::npos) bad("template needs a {payload} placeholder");
            cfg.sqli_template = value;
        } else if (key == "xxe.oob_enabled") {
            if (!parse_bool(value, cfg.xxe_oob_enabled)) bad("expected true or false");
        } else if (key == "xxe.collector") {
            try {
                split_host_port(value, 8091);
            } catch (const std::invalid_argument& e) {
                bad(e.what());
            }
            cfg.xxe_collector = value;
        } else if (key == "rfi.fetch_enabled") {
            if (!parse_bool(value, cfg.rfi_fetch_enabled)) bad("expected true or false");
        } else if (key == "sandbox.backend") {
            auto b = sandbox::parse_backend(value);
            if (!b) bad("expected simulated or container");
            cfg.backend = *b;
        } else if (key == "sandbox.docker_socket") {
            cfg.docker_socket = value;
        } else if (key == "sandbox.seed") {
            if (!parse_number(value, cfg.seed)) bad("expected an unsigned integer");
        } else if (key == "session.idle_timeout") {
            if (!parse_seconds(value, cfg.idle_timeout)) bad("expected positive seconds");
        } else if (key == "session.sweep_interval") {
            if (!parse_seconds(value, cfg.sweep_interval)) bad("expected positive seconds");
        } else if (key == "session.reverse_dns") {
            if (!parse_bool(value, cfg.reverse_dns)) bad("expected true or false");
        } else if (key == "store.backend") {
            if (value != "embedded" && value != "redis") bad("expected embedded or redis");
            cfg.store_backend = value;
        } else if (key == "store.snapshot") {
            cfg.snapshot = value;
        } else if (key == "store.redis") {
            try {
                split_host_port(value, 6379);
            } catch (const std::invalid_argument& e) {
                bad(e.what());
            }
            cfg.redis_address = value;
        } else if (key == "detection.known_bots") {
            cfg.known_bots = value;
        } else if (key == "detection.min_requests") {
            if (!parse_number(value, cfg.thresholds.min_requests) || cfg.thresholds.min_requests < 0) {
                bad("expected a non-negative integer");
            }
        } else if (key == "detection.max_duration") {
            if (!parse_number(value, cfg.thresholds.max_duration) || cfg.thresholds.max_duration <= 0) {
                bad("expected positive seconds");
            }
        } else if (key == "manifest") {
            manifest = value;
            manifest_line = line_no;
        } else if (key == "hidden_link") {
            if (value.empty() || value.front() != '/') bad("expected an absolute path");
            cfg.hidden_link = value;
        } else {
            throw ConfigError(source, line_no, "unknown key '" + key + "'");
        }
    }
    if (manifest) {
        try {
            cfg.known_pages = load_manifest_paths(*manifest);
        } catch (const std::exception& e) {
            throw ConfigError(source, manifest_line, std::string("manifest: ") + e.what());
        }
    }
    return cfg;
}

AnalysisConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::set<std::string> load_manifest_paths(const std::filesystem::path& meta_json) {
    std::ifstream in(meta_json);
    if (!in) throw std::runtime_error("cannot open " + meta_json.string());
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("pages") || !doc["pages"].is_object()) {
        throw std::runtime_error(meta_json.string() + " is not a clone manifest");
    }
    std::set<std::string> out;
    for (const auto& [path, _] : doc["pages"].items()) out.insert(path);
    return out;
}

}  // namespace webtrap::analysis
