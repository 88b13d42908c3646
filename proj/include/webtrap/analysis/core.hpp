#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "webtrap/analysis/config.hpp"
#include "webtrap/analysis/types.hpp"
#include "webtrap/detection/detection.hpp"
#include "webtrap/emulators/emulator.hpp"
#include "webtrap/sandbox/sandbox.hpp"
#include "webtrap/store/store.hpp"

namespace webtrap::analysis {

// Receives events, tracks sessions, runs the base emulator and, when a
// session goes idle, the owner detection.
class AnalysisCore {
public:
    struct Options {
        AnalysisConfig config;
        std::shared_ptr<store::SessionStore> store;  // null: in-memory EmbeddedStore
        detection::KnownBots known_bots = detection::KnownBots::shipped();
        detection::ReverseResolver resolver;         // null: system resolver
        sandbox::HttpGetter http_get;                // remote fetches (XXE OOB, RFI); null: plain HTTP
        std::function<double()> clock;               // wall clock for idle tracking; null: unix_now
    };

    explicit AnalysisCore(Options options);
    ~AnalysisCore();

    AnalysisCore(const AnalysisCore&) = delete;
    AnalysisCore& operator=(const AnalysisCore&) = delete;

    Verdict handle_event(const HttpEvent& event);
    // Schema violations produce an error verdict (type 3).
    Verdict handle_event_json(const json& event);

    // Computes owners, persists and retires an active session. Throws
    // NotFound for uuids that are not active.
    Session finalize_session(const std::string& uuid);
    // Finalizes every session idle for at least the idle timeout; returns
    // how many were finalized.
    std::size_t sweep();
    std::size_t finalize_all();

    // Live state for active sessions, the stored record otherwise.
    // Throws NotFound.
    Session get_session(const std::string& uuid) const;
    json report(const std::string& uuid) const;
    std::vector<std::string> list_sessions(const std::optional<std::string>& attack = std::nullopt) const;
    json stats_summary() const;

    std::size_t active_sessions() const;
    std::uint64_t events_accepted() const { return events_accepted_.load(); }

    // Background idle sweeper (every sweep_interval).
    void start_sweeper();
    void stop_sweeper();

    const AnalysisConfig& config() const { return options_.config; }
    store::SessionStore& store() { return *options_.store; }
    sandbox::Sandbox& sandbox() { return *sandbox_; }

private:
    struct Active {
        std::mutex mu;
        Session session;
        double last_seen = 0;
    };

    std::shared_ptr<Active> attach(const HttpEvent& event, double now);
    std::vector<emulators::InjectableValue> injectable_values(const HttpEvent& event, bool& known_page) const;
    Session finalize_locked_out(std::shared_ptr<Active> active);
    void checkpoint(const Session& s);
    double now() const;

    Options options_;
    std::unique_ptr<sandbox::Sandbox> sandbox_;
    emulators::EmulationContext ctx_;

    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Active>> active_;
    std::map<std::pair<std::string, std::string>, std::string> by_peer_;  // (ip, UA) -> uuid

    std::atomic<std::uint64_t> events_accepted_{0};
    mutable std::mutex rate_mu_;
    std::deque<double> recent_;  // acceptance times within the rate window

    std::mutex sweeper_mu_;
    std::condition_variable sweeper_cv_;
    bool sweeper_stop_ = false;
    std::thread sweeper_;
};

}  // namespace webtrap::analysis
