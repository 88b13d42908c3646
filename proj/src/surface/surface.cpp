#include "webtrap/surface/surface.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "webtrap/util/clock.hpp"
#include "webtrap/util/strings.hpp"
#include "webtrap/util/url.hpp"

namespace webtrap::surface {

namespace {

// pseudo-headers the listener adds to every request
bool injected_header(std::string_view name) {
    return name == "REMOTE_ADDR" || name == "REMOTE_PORT" || name == "LOCAL_ADDR" || name == "LOCAL_PORT";
}

std::size_t rfind_ci(std::string_view hay, std::string_view needle) {
    std::size_t found = std::string_view::npos;
    for (auto at = util::ifind(hay, needle); at != std::string_view::npos; at = util::ifind(hay, needle, at + 1)) {
        found = at;
    }
    return found;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::optional<std::string> WovenResponse::header(std::string_view name) const {
    for (const auto& [k, v] : headers) {
        if (util::iequals(k, name)) return v;
    }
    return std::nullopt;
}

EventSender http_event_sender(std::string host, int port, std::chrono::milliseconds timeout) {
    return [host = std::move(host), port, timeout](const analysis::HttpEvent& event) -> std::optional<analysis::Verdict> {
        httplib::Client client(host, port);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto res = client.Post("/event", event.to_json().dump(), "application/json");
        if (!res) {
            spdlog::error("event forwarding to {}:{} failed: {}", host, port, httplib::to_string(res.error()));
            return std::nullopt;
        }
        auto doc = analysis::json::parse(res->body, nullptr, false);
        try {
            if (doc.is_discarded()) throw analysis::EventError("body is not JSON");
            return analysis::Verdict::from_json(doc);
        } catch (const analysis::EventError& e) {
            spdlog::error("malformed verdict (status {}): {}", res->status, e.what());
            return std::nullopt;
        }
    };
}

std::vector<std::pair<std::string, std::string>> parse_cookie_header(std::string_view header) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& part : util::split(header, ';')) {
        auto item = util::trim(part);
        if (item.empty()) continue;
        auto eq = item.find('=');
        std::string name(util::trim(item.substr(0, eq)));
        if (name.empty()) continue;
        std::string value = eq == std::string_view::npos ? "" : std::string(util::trim(item.substr(eq + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out.emplace_back(std::move(name), std::move(value));
    }
    return out;
}

analysis::HttpEvent build_event(const RawRequest& req, double timestamp) {
    analysis::HttpEvent e;
    e.method = req.method;
    e.path = req.target.empty() ? "/" : req.target;
    for (const auto& [k, v] : req.headers) {
        if (injected_header(k)) continue;
        if (util::iequals(k, "cookie")) {
            for (auto& [name, value] : parse_cookie_header(v)) e.cookies[name] = value;
        }
        auto [it, fresh] = e.headers.emplace(k, v);
        if (!fresh) it->second += ", " + v;
    }
    if (req.form) {
        for (const auto& [k, v] : *req.form) {
            auto [it, fresh] = e.post_data.emplace(k, v);
            if (!fresh) it->second += "," + v;
        }
    } else if (!req.body.empty()) {
        e.post_data[""] = req.body;
    }
    e.peer_ip = req.peer_ip;
    e.peer_port = req.peer_port;
    if (auto it = e.cookies.find(std::string(kSessionCookie)); it != e.cookies.end() && !it->second.empty()) {
        e.uuid = it->second;
    }
    e.timestamp = timestamp;
    return e;
}

std::string weave_response(std::string_view base_page, std::string_view payload) {
    std::string out(base_page);
    auto at = rfind_ci(base_page, "</body");
    if (at == std::string_view::npos) out.append(payload);
    else out.insert(at, payload);
    return out;
}

std::string hidden_anchor(std::string_view token) {
    return "<a href=\"" + std::string(token) + "\" style=\"display:none\"></a>";
}

std::string weave_hidden_link(std::string_view page, std::string_view token, std::string_view content_type) {
    if (!cloner::is_html(content_type)) return std::string(page);
    auto anchor = hidden_anchor(token);
    if (page.find(anchor) != std::string_view::npos) return std::string(page);
    return weave_response(page, anchor);
}

SurfaceHandler::SurfaceHandler(SurfaceConfig config, cloner::CloneManifest manifest, EventSender sender)
    : config_(std::move(config)), manifest_(std::move(manifest)), sender_(std::move(sender)) {
    for (const auto& [path, rec] : manifest_.pages) {
        auto file = config_.page_dir / rec.file_name;
        std::error_code ec;
        if (!std::filesystem::is_regular_file(file, ec)) {
            spdlog::warn("page {} has no file {}", path, file.string());
            continue;
        }
        pages_.emplace(path, Page{rec.content_type, rec.fetch_status, read_file(file)});
    }
    not_found_ = not_found_page();
}

std::unique_ptr<SurfaceHandler> SurfaceHandler::from_page_dir(SurfaceConfig config, EventSender sender) {
    auto manifest = cloner::CloneManifest::load(config.page_dir);
    return std::make_unique<SurfaceHandler>(std::move(config), std::move(manifest), std::move(sender));
}

std::size_t SurfaceHandler::forwarding_failures() const { return failures_.load(); }

const SurfaceHandler::Page* SurfaceHandler::lookup(std::string_view target) const {
    auto hash = target.find('#');
    target = target.substr(0, hash);
    if (auto it = pages_.find(target); it != pages_.end()) return &it->second;
    auto path = util::split_target(target).first;
    if (auto it = pages_.find(path); it != pages_.end()) return &it->second;
    return nullptr;
}

// nginx's stock 404 body inside the clone's own <head>, so stylesheets and
// favicon still match the site.
std::string SurfaceHandler::not_found_page() const {
    std::string head = "<head><title>404 Not Found</title></head>";
    if (auto it = pages_.find(std::string_view("/")); it != pages_.end() && cloner::is_html(it->second.content_type)) {
        std::string_view root = it->second.body;
        auto open = util::ifind(root, "<head");
        auto close = util::ifind(root, "</head>");
        if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
            head = std::string(root.substr(open, close + 7 - open));
            auto t0 = util::ifind(head, "<title");
            auto t1 = util::ifind(head, "</title>");
            if (t0 != std::string::npos && t1 != std::string::npos && t1 > t0) {
                head.replace(t0, t1 + 8 - t0, "<title>404 Not Found</title>");
            }
        }
    }
    return "<html>\r\n" + head + "\r\n<body>\r\n<center><h1>404 Not Found</h1></center>\r\n<hr><center>" +
           config_.server_banner + "</center>\r\n</body>\r\n</html>\r\n";
}

WovenResponse SurfaceHandler::finish(WovenResponse res, const std::optional<analysis::Verdict>& verdict) const {
    auto type = res.header("Content-Type").value_or("text/html");
    res.body = weave_hidden_link(res.body, config_.hidden_link_token, type);
    res.headers.insert(res.headers.begin(), {"Server", config_.server_banner});
    if (verdict && !verdict->sess_uuid.empty()) {
        res.headers.emplace_back("Set-Cookie", std::string(kSessionCookie) + "=" + verdict->sess_uuid + "; Path=/");
    }
    return res;
}

WovenResponse SurfaceHandler::serve(const RawRequest& req) const {
    auto event = build_event(req, util::unix_now());
    std::optional<analysis::Verdict> verdict;
    try {
        verdict = sender_ ? sender_(event) : std::nullopt;
    } catch (const std::exception& e) {
        spdlog::error("event forwarding failed: {}", e.what());
    }
    if (!verdict) {
        failures_.fetch_add(1);
        spdlog::error("no verdict for {} {} from {}; serving plain page", req.method, req.target, req.peer_ip);
    }

    WovenResponse res;
    if (event.decoded_path() == config_.hidden_link_token) {
        res.status = 200;
        res.headers.emplace_back("Content-Type", "text/html");
        return finish(std::move(res), verdict);
    }

    if (verdict && verdict->type == analysis::VerdictType::inject) {
        std::string payload = verdict->payload.value_or("");
        if (!verdict->page) {
            res.headers.emplace_back("Content-Type", "text/plain");
            res.body = std::move(payload);
            return finish(std::move(res), verdict);
        }
        const Page* base = lookup(req.target);
        if (!base || !cloner::is_html(base->content_type)) base = lookup("/");
        res.headers.emplace_back("Content-Type", base ? base->content_type : "text/html");
        res.body = weave_response(base ? std::string_view(base->body) : std::string_view(not_found_), payload);
        return finish(std::move(res), verdict);
    }

    const Page* page = lookup(req.target);
    if (page && page->status >= 200 && page->status < 500) {
        res.status = page->status;
        res.headers.emplace_back("Content-Type", page->content_type);
        res.body = page->body;
    } else {
        res.status = 404;
        res.headers.emplace_back("Content-Type", "text/html");
        res.body = not_found_;
    }
    return finish(std::move(res), verdict);
}

SurfaceServer::SurfaceServer(const SurfaceHandler& handler)
    : handler_(handler), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    s.set_default_headers({{"Server", handler_.config().server_banner}});
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
        RawRequest raw;
        raw.method = req.method;
        raw.target = req.target;
        for (const auto& [k, v] : req.headers) raw.headers.emplace_back(k, v);
        raw.body = req.body;
        auto type = req.get_header_value("Content-Type");
        if (util::icontains(type, "application/x-www-form-urlencoded")) {
            raw.form = util::parse_query(req.body);
        } else if (req.is_multipart_form_data()) {
            raw.form.emplace();
            for (const auto& [name, part] : req.files) raw.form->emplace_back(name, part.content);
        }
        raw.peer_ip = req.remote_addr;
        raw.peer_port = req.remote_port;

        auto woven = handler_.serve(raw);
        res.status = woven.status;
        std::string content_type = "text/html";
        for (const auto& [k, v] : woven.headers) {
            if (util::iequals(k, "Content-Type")) content_type = v;
            else if (!util::iequals(k, "Server")) res.set_header(k, v);  // banner comes from the default headers
        }
        res.set_content(woven.body, content_type);
    };
    s.Get(".*", route);
    s.Post(".*", route);
    s.Put(".*", route);
    s.Delete(".*", route);
    s.Patch(".*", route);
    s.Options(".*", route);
    s.set_exception_handler([this](const httplib::Request& req, httplib::Response& res, std::exception_ptr) {
        spdlog::error("request {} {} raised; answering 404", req.method, req.target);
        res.status = 404;
        res.set_content(handler_.not_found_body(), "text/html");
    });
}

SurfaceServer::~SurfaceServer() { stop(); }

int SurfaceServer::start(const std::string& host, int port) {
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void SurfaceServer::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace webtrap::surface
