#include <doctest.h>
#include <httplib.h>

#include "support.hpp"
#include "webtrap/analysis/core.hpp"
#include "webtrap/analysis/server.hpp"
#include "webtrap/surface/surface.hpp"

using namespace webtrap::surface;
using webtrap::analysis::HttpEvent;
using webtrap::analysis::Verdict;
using webtrap::analysis::VerdictType;
using webtrap::testing::TempDir;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

webtrap::cloner::CloneManifest manifest() {
    webtrap::cloner::CloneManifest m;
    for (std::string p : {"/", "/about", "/data.json"}) {
        m.pages[p] = {p, webtrap::cloner::md5_file_name(p), p == "/data.json" ? "application/json" : "text/html", 200, {}};
    }
    return m;
}

// Clone directory holding the pages of manifest().
void write_pages(const std::filesystem::path& dir) {
    auto m = manifest();
    m.root_url = "http://shop.example/";
    m.save(dir);
    webtrap::testing::write_text(dir / m.pages["/"].file_name,
                                 "<html><head><title>Acme Corp</title></head><body><h1>Acme</h1></body></html>");
    webtrap::testing::write_text(dir / m.pages["/about"].file_name, "<html><body>About us</body></html>");
    webtrap::testing::write_text(dir / m.pages["/data.json"].file_name, "{\"a\":1}");
}

struct Scripted {
    std::vector<HttpEvent> seen;
    std::optional<Verdict> next;
    EventSender sender() {
        return [this](const HttpEvent& e) {
            seen.push_back(e);
            return next;
        };
    }
};

Verdict inject(std::string name, std::string payload, bool page = true) {
    Verdict v;
    v.sess_uuid = "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6";
    v.type = VerdictType::inject;
    v.name = std::move(name);
    v.payload = std::move(payload);
    v.page = page;
    return v;
}

RawRequest get(std::string target) {
    RawRequest r;
    r.method = "GET";
    r.target = std::move(target);
    r.headers = {{"Host", "shop.example"}, {"User-Agent", "Mozilla/5.0"}};
    r.peer_ip = "198.51.100.1";
    r.peer_port = 5555;
    return r;
}

}  // namespace

TEST_SUITE("surface") {
    TEST_CASE("weaving") {
        CHECK(weave_response("<html><body>hi</body></html>", "49") == "<html><body>hi49</body></html>");
        CHECK(weave_response("<html><body>hi</body></html>", "") == "<html><body>hi</body></html>");
        CHECK(weave_response("<p>no body tag", "x") == "<p>no body tagx");
        CHECK(weave_response("<BODY>a</BODY><!-- </body> -->", "x") == "<BODY>a</BODY><!-- x</body> -->");
        std::string passwd = "root:x:0:0:root:/root:/bin/bash\n";
        CHECK(weave_response("<body></body>", passwd).find(passwd) != std::string::npos);
    }

    TEST_CASE("hidden link") {
        std::string page = "<html><body>hi</body></html>";
        auto once = weave_hidden_link(page, "/s3cr3t-trap");
        CHECK(count_of(once, "href=\"/s3cr3t-trap\"") == 1);
        CHECK(once.find("display:none") != std::string::npos);
        CHECK(weave_hidden_link(once, "/s3cr3t-trap") == once);
        CHECK(weave_hidden_link("{\"a\":1}", "/s3cr3t-trap", "application/json") == "{\"a\":1}");
        CHECK(hidden_anchor("/t") == "<a href=\"/t\" style=\"display:none\"></a>");
    }

    TEST_CASE("cookie header") {
        auto c = parse_cookie_header("a=1; SNARE_UUID=abc;b = two ; flag");
        REQUIRE(c.size() >= 3);
        CHECK(c[0] == std::pair<std::string, std::string>{"a", "1"});
        CHECK(c[1] == std::pair<std::string, std::string>{"SNARE_UUID", "abc"});
        CHECK(c[2] == std::pair<std::string, std::string>{"b", "two"});
    }

    TEST_CASE("event building") {
        auto r = get("/search?q=%7B%7B7*7%7D%7D");
        r.headers.push_back({"Cookie", "SNARE_UUID=6f1b6ef5-c988-4910-8353-4fd5bb0a73b6; theme=dark"});
        r.headers.push_back({"X-Dup", "a"});
        r.headers.push_back({"X-Dup", "b"});
        r.headers.push_back({"REMOTE_ADDR", "1.2.3.4"});
        auto e = build_event(r, 12.5);
        CHECK(e.path == "/search?q=%7B%7B7*7%7D%7D");
        CHECK(e.uuid == std::optional<std::string>("6f1b6ef5-c988-4910-8353-4fd5bb0a73b6"));
        CHECK(e.cookies.at("theme") == "dark");
        CHECK(e.headers.at("X-Dup") == "a, b");
        CHECK(e.headers.count("REMOTE_ADDR") == 0);
        CHECK(e.peer_ip == "198.51.100.1");
        CHECK(e.peer_port == 5555);
        CHECK(e.timestamp == 12.5);

        RawRequest post = get("/login");
        post.method = "POST";
        post.form = std::vector<std::pair<std::string, std::string>>{{"user", "' OR '1'='1"}};
        CHECK(build_event(post, 0).post_data.at("user") == "' OR '1'='1");
        RawRequest xml = get("/upload");
        xml.method = "POST";
        xml.body = "<a/>";
        CHECK(build_event(xml, 0).post_data.at("") == "<a/>");
    }

    TEST_CASE("serving verdicts") {
        TempDir dir;
        write_pages(dir.path());
        Scripted analysis;
        auto handler = SurfaceHandler::from_page_dir(SurfaceConfig{.page_dir = dir.path()}, analysis.sender());

        Verdict plain;
        plain.sess_uuid = "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6";
        analysis.next = plain;
        auto home = handler->serve(get("/"));
        CHECK(home.status == 200);
        CHECK(home.header("Server") == std::optional<std::string>("nginx/1.16.1"));
        CHECK(home.body.find("<h1>Acme</h1>") != std::string::npos);
        CHECK(count_of(home.body, "/s3cr3t-trap") == 1);
        CHECK(home.header("Set-Cookie") == std::optional<std::string>("SNARE_UUID=" + plain.sess_uuid + "; Path=/"));

        analysis.next = inject("template_injection", "49");
        auto tmpl = handler->serve(get("/?q={{7*7}}"));
        CHECK(tmpl.status == 200);
        CHECK(tmpl.body.find("49") != std::string::npos);
        CHECK(tmpl.body.find("<h1>Acme</h1>") != std::string::npos);

        analysis.next = inject("xss", "<script>alert(1)</script>");
        auto about = handler->serve(get("/about?x=1"));
        CHECK(about.body.find("About us<script>alert(1)</script>") != std::string::npos);

        analysis.next = inject("lfi", "web-prod-02\n", false);
        auto raw = handler->serve(get("/?f=/etc/hostname"));
        CHECK(raw.body == "web-prod-02\n");
        CHECK(raw.header("Content-Type")->find("text/plain") == 0);

        analysis.next = plain;
        auto json_page = handler->serve(get("/data.json"));
        CHECK(json_page.body == "{\"a\":1}");

        auto missing = handler->serve(get("/nonexistent"));
        CHECK(missing.status == 404);
        CHECK(missing.header("Server") == std::optional<std::string>("nginx/1.16.1"));
        CHECK(missing.body.find("Acme Corp") == std::string::npos);
        CHECK(missing.body.find("404 Not Found") != std::string::npos);

        CHECK(handler->serve(get("/s3cr3t-trap")).status == 200);
        CHECK(analysis.seen.size() == 7);
    }

    TEST_CASE("analysis outage falls back to plain pages") {
        TempDir dir;
        write_pages(dir.path());
        auto handler = SurfaceHandler::from_page_dir(
            SurfaceConfig{.page_dir = dir.path()}, http_event_sender("127.0.0.1", 1, std::chrono::milliseconds(300)));
        auto res = handler->serve(get("/?q={{7*7}}"));
        CHECK(res.status == 200);
        CHECK(res.body.find("<h1>Acme</h1>") != std::string::npos);
        CHECK(res.body.find("49") == std::string::npos);
        CHECK(handler->forwarding_failures() == 1);
        CHECK_FALSE(res.header("Set-Cookie").has_value());
    }

    TEST_CASE("end to end through both servers") {
        TempDir dir;
        write_pages(dir.path());
        webtrap::analysis::AnalysisCore::Options o;
        o.config.known_pages = {"/", "/about", "/data.json"};
        o.resolver = [](const std::string&) { return std::optional<std::string>(); };
        webtrap::analysis::AnalysisCore core(o);
        webtrap::analysis::AnalysisServer analysis(core);
        int aport = analysis.start("127.0.0.1", 0);

        auto handler = SurfaceHandler::from_page_dir(SurfaceConfig{.page_dir = dir.path()},
                                                     http_event_sender("127.0.0.1", aport, std::chrono::seconds(2)));
        SurfaceServer surface(*handler);
        int sport = surface.start("127.0.0.1", 0);
        httplib::Client cli("127.0.0.1", sport);

        auto home = cli.Get("/");
        REQUIRE(home);
        CHECK(home->status == 200);
        CHECK(home->get_header_value("Server") == "nginx/1.16.1");
        auto cookie = home->get_header_value("Set-Cookie");
        auto uuid = cookie.substr(11, 36);
        httplib::Headers with_cookie = {{"Cookie", "SNARE_UUID=" + uuid}};

        auto tmpl = cli.Get("/?q=%7B%7B7*7%7D%7D", with_cookie);
        REQUIRE(tmpl);
        CHECK(tmpl->body.find("49") != std::string::npos);

        auto login = cli.Post("/login", with_cookie, "user=%27+OR+%271%27%3D%271&pass=x", "application/x-www-form-urlencoded");
        REQUIRE(login);
        CHECK(login->body.find("linda.johnson0") != std::string::npos);

        auto missing = cli.Get("/nonexistent", with_cookie);
        REQUIRE(missing);
        CHECK(missing->status == 404);
        CHECK(missing->get_header_value("Server") == "nginx/1.16.1");

        auto s = core.get_session(uuid);
        CHECK(s.request_count == 4);
        CHECK(s.attack_counts.at("template_injection") == 1);
        CHECK(s.attack_counts.at("sqli") == 1);
        surface.stop();
        analysis.stop();
    }
}
