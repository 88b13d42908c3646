#include "webtrap/analysis/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <stdexcept>

namespace webtrap::analysis {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

int bind_and_run(httplib::Server& server, std::thread& thread, const std::string& host, int port) {
    int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread = std::thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    return bound;
}

}  // namespace

AnalysisServer::AnalysisServer(AnalysisCore& core) : core_(core), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    s.Post("/event", [this](const httplib::Request& req, httplib::Response& res) {
        auto doc = json::parse(req.body, nullptr, false);
        if (doc.is_discarded()) {
            spdlog::warn("event body is not JSON ({} bytes)", req.body.size());
            Verdict v;
            v.type = VerdictType::error;
            v.name = "error";
            send_json(res, 400, v.to_json());
            return;
        }
        auto verdict = core_.handle_event_json(doc);
        send_json(res, verdict.type == VerdictType::error && verdict.sess_uuid.empty() ? 400 : 200, verdict.to_json());
    });
    s.Get("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> attack;
        if (req.has_param("attack")) attack = req.get_param_value("attack");
        send_json(res, 200, {{"sessions", core_.list_sessions(attack)}});
    });
    s.Get(R"(/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, core_.report(req.matches[1]));
        } catch (const NotFound&) {
            send_json(res, 404, {{"error", "not found"}});
        }
    });
    s.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, core_.stats_summary());
    });
    s.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unknown";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        spdlog::error("{} {} failed: {}", req.method, req.path, what);
        send_json(res, 500, {{"error", "internal error"}});
    });
}

AnalysisServer::~AnalysisServer() { stop(); }

int AnalysisServer::start(const std::string& host, int port) {
    port_ = bind_and_run(*server_, thread_, host, port);
    return port_;
}

void AnalysisServer::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

OobCollector::OobCollector() : server_(std::make_unique<httplib::Server>()) {
    auto record = [this](const httplib::Request& req, httplib::Response& res) {
        Hit hit{req.method, req.target, req.body, req.remote_addr + ":" + std::to_string(req.remote_port)};
        spdlog::info("oob hit {} {} from {}", hit.method, hit.target, hit.peer);
        {
            std::lock_guard lock(mu_);
            hits_.push_back(std::move(hit));
        }
        res.status = 200;
    };
    server_->Get(".*", record);
    server_->Post(".*", record);
}

OobCollector::~OobCollector() { stop(); }

int OobCollector::start(const std::string& host, int port) {
    port_ = bind_and_run(*server_, thread_, host, port);
    return port_;
}

void OobCollector::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::vector<OobCollector::Hit> OobCollector::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

}  // namespace webtrap::analysis
