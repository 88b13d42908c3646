#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "webtrap/analysis/types.hpp"
#include "webtrap/cloner/cloner.hpp"

namespace httplib {
class Server;
}

namespace webtrap::surface {

inline constexpr std::string_view kSessionCookie = "SNARE_UUID";

struct SurfaceConfig {
    std::string listen_host = "0.0.0.0";
    int listen_port = 8080;
    std::string tanner_host = "127.0.0.1";
    int tanner_port = 8090;
    std::filesystem::path page_dir;
    std::string server_banner = "nginx/1.16.1";
    std::string hidden_link_token = "/s3cr3t-trap";
    std::chrono::milliseconds forward_timeout = std::chrono::seconds(2);
};

using Headers = std::vector<std::pair<std::string, std::string>>;

struct RawRequest {
    std::string method;
    std::string target;  // path + query as sent
    Headers headers;
    std::string body;
    // Decoded form fields; filled by the listener for urlencoded and
    // multipart bodies.
    std::optional<std::vector<std::pair<std::string, std::string>>> form;
    std::string peer_ip;
    int peer_port = 0;
};

struct WovenResponse {
    int status = 200;
    Headers headers;
    std::string body;

    std::optional<std::string> header(std::string_view name) const;
};

// Posts an event and returns the verdict; nullopt on any failure.
using EventSender = std::function<std::optional<analysis::Verdict>(const analysis::HttpEvent&)>;

EventSender http_event_sender(std::string host, int port, std::chrono::milliseconds timeout);

// Name/value pairs of a Cookie header, values kept raw.
std::vector<std::pair<std::string, std::string>> parse_cookie_header(std::string_view header);

// Event for a request. Bodies that are not forms travel whole under the
// empty post_data key.
analysis::HttpEvent build_event(const RawRequest& req, double timestamp);

// payload goes right before the last </body>, or at the end.
std::string weave_response(std::string_view base_page, std::string_view payload);
// Adds one invisible anchor to token; non-HTML content is returned as is.
std::string weave_hidden_link(std::string_view page, std::string_view token,
                              std::string_view content_type = "text/html");
std::string hidden_anchor(std::string_view token);

// Request handling without sockets: clone pages in memory plus an event
// sender. Safe for concurrent use.
class SurfaceHandler {
public:
    SurfaceHandler(SurfaceConfig config, cloner::CloneManifest manifest, EventSender sender);
    // Loads <page_dir>/meta.json and every page file.
    static std::unique_ptr<SurfaceHandler> from_page_dir(SurfaceConfig config, EventSender sender);

    WovenResponse serve(const RawRequest& req) const;

    const SurfaceConfig& config() const { return config_; }
    const cloner::CloneManifest& manifest() const { return manifest_; }
    std::size_t forwarding_failures() const;
    const std::string& not_found_body() const { return not_found_; }

private:
    struct Page {
        std::string content_type;
        int status = 200;
        std::string body;
    };

    const Page* lookup(std::string_view target) const;
    WovenResponse finish(WovenResponse res, const std::optional<analysis::Verdict>& verdict) const;
    std::string not_found_page() const;

    SurfaceConfig config_;
    cloner::CloneManifest manifest_;
    EventSender sender_;
    std::map<std::string, Page, std::less<>> pages_;
    std::string not_found_;
    mutable std::atomic<std::size_t> failures_{0};
};

// Socket front of a SurfaceHandler.
class SurfaceServer {
public:
    explicit SurfaceServer(const SurfaceHandler& handler);
    ~SurfaceServer();

    SurfaceServer(const SurfaceServer&) = delete;
    SurfaceServer& operator=(const SurfaceServer&) = delete;

    // port 0 picks a free port. Throws std::runtime_error when binding fails.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    const SurfaceHandler& handler_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace webtrap::surface
