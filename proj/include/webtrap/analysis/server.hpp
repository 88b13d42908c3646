#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "webtrap/analysis/core.hpp"

namespace httplib {
class Server;
}

namespace webtrap::analysis {

// HTTP front of the analysis core.
//
//   POST /event             event JSON -> verdict JSON
//   GET  /sessions[?attack] {"sessions": [uuid...]}
//   GET  /session/<uuid>    report, 404 when unknown
//   GET  /stats             totals
class AnalysisServer {
public:
    explicit AnalysisServer(AnalysisCore& core);
    ~AnalysisServer();

    AnalysisServer(const AnalysisServer&) = delete;
    AnalysisServer& operator=(const AnalysisServer&) = delete;

    // Binds and serves on a background thread. port 0 picks a free port.
    // Throws std::runtime_error when the address cannot be bound.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    AnalysisCore& core_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

// Out-of-band listener for XXE exfiltration: every request is recorded
// and answered with an empty 200.
class OobCollector {
public:
    struct Hit {
        std::string method;
        std::string target;
        std::string body;
        std::string peer;
    };

    OobCollector();
    ~OobCollector();

    OobCollector(const OobCollector&) = delete;
    OobCollector& operator=(const OobCollector&) = delete;

    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }
    std::vector<Hit> hits() const;

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::vector<Hit> hits_;
};

}  // namespace webtrap::analysis
