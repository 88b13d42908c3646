#include "webtrap/analysis/core.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include "webtrap/util/clock.hpp"
#include "webtrap/util/url.hpp"
#include "webtrap/util/uuid.hpp"

namespace webtrap::analysis {

namespace {

constexpr double kRateWindow = 60.0;
constexpr std::string_view kSessionCookie = "SNARE_UUID";

}  // namespace

AnalysisCore::AnalysisCore(Options options) : options_(std::move(options)) {
    if (!options_.store) options_.store = std::make_shared<store::EmbeddedStore>();
    if (!options_.resolver) options_.resolver = detection::system_resolver();
    if (!options_.clock) options_.clock = [] { return util::unix_now(); };
    if (!options_.http_get) options_.http_get = sandbox::default_http_getter();

    const auto& cfg = options_.config;
    sandbox::SandboxConfig sc;
    sc.backend = cfg.backend;
    sc.seed = cfg.seed;
    sc.container.socket_path = cfg.docker_socket;
    sc.http_get = options_.http_get;
    sandbox_ = std::make_unique<sandbox::Sandbox>(std::move(sc));

    ctx_.sandbox = sandbox_.get();
    ctx_.xxe_oob_enabled = cfg.xxe_oob_enabled;
    ctx_.xxe_collector = cfg.xxe_collector;
    ctx_.rfi_fetch_enabled = cfg.rfi_fetch_enabled;
    ctx_.rfi_getter = options_.http_get;
    ctx_.sqli_template = cfg.sqli_template;
}

AnalysisCore::~AnalysisCore() { stop_sweeper(); }

double AnalysisCore::now() const { return options_.clock(); }

std::shared_ptr<AnalysisCore::Active> AnalysisCore::attach(const HttpEvent& event, double now) {
    std::string ua = event.user_agent();
    std::lock_guard lock(sessions_mu_);
    if (event.uuid && util::is_uuid_v4(*event.uuid)) {
        if (auto it = active_.find(*event.uuid); it != active_.end()) return it->second;
        // a returning client whose session was already finalized resumes it
        if (auto stored = options_.store->get_session(*event.uuid)) {
            auto active = std::make_shared<Active>();
            active->session = Session::from_json(*stored);
            active->session.finished = false;
            active->session.owners.reset();
            active->last_seen = now;
            active_[active->session.uuid] = active;
            by_peer_[{event.peer_ip, ua}] = active->session.uuid;
            return active;
        }
    }
    if (auto it = by_peer_.find({event.peer_ip, ua}); it != by_peer_.end()) {
        if (auto a = active_.find(it->second); a != active_.end()) return a->second;
    }
    auto active = std::make_shared<Active>();
    auto& s = active->session;
    s.uuid = util::make_uuid_v4();
    s.ip = event.peer_ip;
    s.port = event.peer_port;
    s.start_time = event.timestamp;
    s.end_time = event.timestamp;
    active->last_seen = now;
    active_[s.uuid] = active;
    by_peer_[{event.peer_ip, ua}] = s.uuid;
    return active;
}

std::vector<emulators::InjectableValue> AnalysisCore::injectable_values(const HttpEvent& event, bool& known_page) const {
    using emulators::Source;
    std::vector<emulators::InjectableValue> values;
    auto raw_path = util::split_target(event.path).first;
    std::string path = event.decoded_path();
    const auto& pages = options_.config.known_pages;
    known_page = pages.count(path) > 0 || pages.count(std::string(raw_path)) > 0 || pages.count(event.path) > 0;
    if (!known_page) values.push_back({Source::get, "", path});
    for (auto& [k, v] : event.query_params()) values.push_back({Source::get, k, v});
    for (const auto& [k, v] : event.post_data) values.push_back({Source::post, k, v});
    for (const auto& [k, v] : event.cookies) {
        if (k == kSessionCookie) continue;
        values.push_back({Source::cookie, k, util::percent_decode(v)});
    }
    return values;
}

void AnalysisCore::checkpoint(const Session& s) { options_.store->put_session(s.uuid, s.to_json()); }

Verdict AnalysisCore::handle_event(const HttpEvent& event) {
    double wall = now();
    for (;;) {
        auto active = attach(event, wall);
        std::lock_guard lock(active->mu);
        if (active->session.finished) continue;  // finalized between attach and lock
        Session& s = active->session;
        active->last_seen = wall;

        double ts = std::max(event.timestamp, s.end_time);
        if (s.request_count == 0) s.start_time = ts;
        s.end_time = ts;
        s.request_count += 1;
        s.port = event.peer_port;
        std::string ua = event.user_agent();
        if (!ua.empty() && std::find(s.user_agents.begin(), s.user_agents.end(), ua) == s.user_agents.end()) {
            s.user_agents.push_back(ua);
        }
        for (const auto& [k, v] : event.cookies) {
            if (k != kSessionCookie) s.cookies[k] = v;
        }

        Verdict verdict;
        verdict.sess_uuid = s.uuid;
        std::string path = event.decoded_path();
        std::string attack;
        if (path == "/robots.txt") {
            s.robots_fetched = true;
            attack = "index";
        } else if (path == options_.config.hidden_link) {
            s.hidden_link_hits += 1;
            attack = "index";
        } else {
            bool known_page = false;
            auto values = injectable_values(event, known_page);
            auto result = emulators::base_handle(values, known_page, ctx_);
            attack = result.name;
            for (auto& note : result.notes) s.logs.push_back(std::move(note));
            if (result.order > 1) {
                s.attack_counts[result.name] += 1;
                verdict.type = VerdictType::inject;
                verdict.payload = std::move(result.value);
                verdict.page = result.page;
            }
        }
        verdict.name = attack;
        s.paths.push_back({event.path, ts, attack});

        events_accepted_.fetch_add(1);
        {
            std::lock_guard rate_lock(rate_mu_);
            recent_.push_back(wall);
            while (!recent_.empty() && recent_.front() < wall - kRateWindow) recent_.pop_front();
        }
        try {
            checkpoint(s);
        } catch (const std::exception& e) {
            spdlog::error("session {} checkpoint failed: {}", s.uuid, e.what());
            verdict.type = VerdictType::error;
            verdict.payload.reset();
            verdict.page = true;
        }
        return verdict;
    }
}

Verdict AnalysisCore::handle_event_json(const json& event) {
    try {
        return handle_event(HttpEvent::from_json(event));
    } catch (const EventError& e) {
        spdlog::warn("rejected malformed event: {}", e.what());
        Verdict v;
        v.type = VerdictType::error;
        v.name = "error";
        return v;
    }
}

Session AnalysisCore::finalize_locked_out(std::shared_ptr<Active> active) {
    std::lock_guard lock(active->mu);
    Session& s = active->session;
    if (options_.config.reverse_dns && !s.peer_hostname) {
        s.peer_hostname = detection::reverse_dns(s.ip, std::chrono::seconds(1), options_.resolver);
    }
    s.owners = detection::classify_owner(s.features(), options_.known_bots, options_.config.thresholds);
    s.finished = true;
    try {
        checkpoint(s);
    } catch (const std::exception& e) {
        spdlog::error("session {} could not be persisted: {}", s.uuid, e.what());
    }
    spdlog::info("session {} finished: {} requests, attacker={} crawler={} tool={} user={}", s.uuid, s.request_count,
                 s.owners->attacker, s.owners->crawler, s.owners->tool, s.owners->user);
    return s;
}

Session AnalysisCore::finalize_session(const std::string& uuid) {
    std::shared_ptr<Active> active;
    {
        std::lock_guard lock(sessions_mu_);
        auto it = active_.find(uuid);
        if (it == active_.end()) throw NotFound("no active session " + uuid);
        active = it->second;
        active_.erase(it);
        for (auto p = by_peer_.begin(); p != by_peer_.end();) {
            p = p->second == uuid ? by_peer_.erase(p) : std::next(p);
        }
    }
    return finalize_locked_out(std::move(active));
}

std::size_t AnalysisCore::sweep() {
    double cutoff = now() - std::chrono::duration<double>(options_.config.idle_timeout).count();
    std::vector<std::string> idle;
    {
        std::lock_guard lock(sessions_mu_);
        for (const auto& [uuid, active] : active_) {
            std::lock_guard session_lock(active->mu);
            if (active->last_seen <= cutoff) idle.push_back(uuid);
        }
    }
    std::size_t done = 0;
    for (const auto& uuid : idle) {
        try {
            finalize_session(uuid);
            ++done;
        } catch (const NotFound&) {
        }
    }
    if (done > 0) {
        try {
            options_.store->put_stats(stats_summary());
        } catch (const std::exception& e) {
            spdlog::error("stats update failed: {}", e.what());
        }
    }
    return done;
}

std::size_t AnalysisCore::finalize_all() {
    std::vector<std::string> uuids;
    {
        std::lock_guard lock(sessions_mu_);
        for (const auto& [uuid, _] : active_) uuids.push_back(uuid);
    }
    std::size_t done = 0;
    for (const auto& uuid : uuids) {
        try {
            finalize_session(uuid);
            ++done;
        } catch (const NotFound&) {
        }
    }
    try {
        options_.store->put_stats(stats_summary());
    } catch (const std::exception& e) {
        spdlog::error("stats update failed: {}", e.what());
    }
    try {
        options_.store->flush();
    } catch (const std::exception& e) {
        spdlog::error("final store flush failed: {}", e.what());
    }
    return done;
}

Session AnalysisCore::get_session(const std::string& uuid) const {
    std::shared_ptr<Active> active;
    {
        std::lock_guard lock(sessions_mu_);
        if (auto it = active_.find(uuid); it != active_.end()) active = it->second;
    }
    if (active) {
        std::lock_guard lock(active->mu);
        Session s = active->session;
        // provisional owners; reverse DNS waits for finalization
        s.owners = detection::classify_owner(s.features(), options_.known_bots, options_.config.thresholds);
        return s;
    }
    auto stored = options_.store->get_session(uuid);
    if (!stored) throw NotFound("session " + uuid + " not found");
    return Session::from_json(*stored);
}

json AnalysisCore::report(const std::string& uuid) const { return session_report(get_session(uuid)); }

std::vector<std::string> AnalysisCore::list_sessions(const std::optional<std::string>& attack) const {
    auto stored = options_.store->list_sessions(attack);
    std::set<std::string> all(stored.begin(), stored.end());
    std::vector<std::shared_ptr<Active>> actives;
    {
        std::lock_guard lock(sessions_mu_);
        for (const auto& [_, a] : active_) actives.push_back(a);
    }
    for (const auto& a : actives) {
        std::lock_guard lock(a->mu);
        if (!attack || a->session.attack_counts.count(*attack) > 0) all.insert(a->session.uuid);
    }
    return {all.begin(), all.end()};
}

json AnalysisCore::stats_summary() const {
    json totals = json::object();
    for (const auto& e : emulators::registry()) totals[std::string(e->name())] = 0;
    std::int64_t requests = 0;
    auto uuids = options_.store->list_sessions();
    for (const auto& uuid : uuids) {
        auto doc = options_.store->get_session(uuid);
        if (!doc) continue;
        requests += doc->value("request_count", std::int64_t{0});
        auto counts = doc->value("attack_counts", json::object());
        for (const auto& [name, count] : counts.items()) {
            if (count.is_number_integer()) totals[name] = totals.value(name, std::int64_t{0}) + count.get<std::int64_t>();
        }
    }
    double rate = 0;
    {
        std::lock_guard lock(rate_mu_);
        double cutoff = now() - kRateWindow;
        auto n = std::count_if(recent_.begin(), recent_.end(), [&](double t) { return t >= cutoff; });
        rate = static_cast<double>(n) / kRateWindow;
    }
    return {
        {"attack_totals", totals},
        {"active_sessions", active_sessions()},
        {"total_sessions", uuids.size()},
        {"total_requests", requests},
        {"events_accepted", events_accepted()},
        {"events_per_second", rate},
        {"window_seconds", kRateWindow},
    };
}

std::size_t AnalysisCore::active_sessions() const {
    std::lock_guard lock(sessions_mu_);
    return active_.size();
}

void AnalysisCore::start_sweeper() {
    std::lock_guard lock(sweeper_mu_);
    if (sweeper_.joinable()) return;
    sweeper_stop_ = false;
    sweeper_ = std::thread([this] {
        std::unique_lock lock(sweeper_mu_);
        while (!sweeper_cv_.wait_for(lock, options_.config.sweep_interval, [this] { return sweeper_stop_; })) {
            lock.unlock();
            try {
                sweep();
            } catch (const std::exception& e) {
                spdlog::error("session sweep failed: {}", e.what());
            }
            lock.lock();
        }
    });
}

void AnalysisCore::stop_sweeper() {
    {
        std::lock_guard lock(sweeper_mu_);
        sweeper_stop_ = true;
    }
    sweeper_cv_.notify_all();
    if (sweeper_.joinable()) sweeper_.join();
}

}  // namespace webtrap::analysis
