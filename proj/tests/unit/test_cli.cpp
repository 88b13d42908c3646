#include <doctest.h>
#include <httplib.h>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <regex>
#include <sstream>

#include "support.hpp"
#include "webtrap/cli/cli.hpp"

using webtrap::testing::FixtureSite;
using webtrap::testing::TempDir;

namespace {

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "webtrap");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    int code = webtrap::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// The real binary in a child process, stdout captured through a pipe.
class Child {
public:
    explicit Child(std::vector<std::string> args) {
        int fds[2];
        REQUIRE(::pipe(fds) == 0);
        pid_ = ::fork();
        REQUIRE(pid_ >= 0);
        if (pid_ == 0) {
            ::dup2(fds[1], STDOUT_FILENO);
            int devnull = ::open("/dev/null", O_WRONLY);
            ::dup2(devnull, STDERR_FILENO);
            ::close(fds[0]);
            args.insert(args.begin(), WEBTRAP_BINARY);
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::execv(WEBTRAP_BINARY, argv.data());
            ::_exit(127);
        }
        ::close(fds[1]);
        fd_ = fds[0];
    }
    ~Child() {
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
        if (fd_ >= 0) ::close(fd_);
    }

    // Reads stdout until pattern appears; returns everything read so far.
    std::string read_until(const std::string& pattern, std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (output_.find(pattern) == std::string::npos) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) break;
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) break;
            char buf[4096];
            auto n = ::read(fd_, buf, sizeof buf);
            if (n <= 0) break;
            output_.append(buf, static_cast<std::size_t>(n));
        }
        return output_;
    }

    int interrupt_and_wait(std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
        ::kill(pid_, SIGINT);
        auto deadline = std::chrono::steady_clock::now() + timeout;
        int status = 0;
        while (std::chrono::steady_clock::now() < deadline) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                read_until("\x01", std::chrono::milliseconds(200));  // drain
                return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        return -1;
    }

    const std::string& output() const { return output_; }

private:
    pid_t pid_ = -1;
    int fd_ = -1;
    std::string output_;
};

int banner_port(const std::string& out) {
    std::smatch m;
    std::regex re(R"(Running on http://[^:]+:(\d+))");
    if (!std::regex_search(out, m, re)) return 0;
    return std::stoi(m[1]);
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("usage errors exit 2, help exits 0") {
        CHECK(run_cli({}).code == webtrap::cli::kExitUsage);
        CHECK(run_cli({"frobnicate"}).code == webtrap::cli::kExitUsage);
        CHECK(run_cli({"clone", "--path", "/tmp/x"}).code == webtrap::cli::kExitUsage);
        CHECK(run_cli({"clone", "--target", "http://x/", "--path", "/tmp/x", "--max-depth", "-1"}).code ==
              webtrap::cli::kExitUsage);
        CHECK(run_cli({"serve"}).code == webtrap::cli::kExitUsage);
        CHECK(run_cli({"report"}).code == webtrap::cli::kExitUsage);
        CHECK(run_cli({"analyze", "--config", "/nonexistent/webtrap.conf"}).code == webtrap::cli::kExitUsage);
        auto help = run_cli({"--help"});
        CHECK(help.code == 0);
        CHECK(help.out.find("clone") != std::string::npos);
    }

    TEST_CASE("clone command") {
        FixtureSite site;
        webtrap::testing::add_standard_pages(site);
        site.start();
        TempDir dir;
        auto ok = run_cli({"clone", "--target", site.url("/"), "--path", dir.path().string(), "--max-depth", "3"});
        CHECK(ok.code == 0);
        CHECK(std::regex_search(ok.out, std::regex(R"((^|\n)\s*200\s+6666cd76f96956469e7be39d750cc7d9\s+/\n)")));
        CHECK(ok.out.find("cloned 4 pages") != std::string::npos);
        CHECK(std::filesystem::exists(dir.path() / "meta.json"));

        TempDir other;
        auto down = run_cli({"clone", "--target", "http://127.0.0.1:1/", "--path", other.path().string()});
        CHECK(down.code == webtrap::cli::kExitFailure);
        CHECK_FALSE(down.err.empty());
    }

    TEST_CASE("report against a missing service fails") {
        auto r = run_cli({"report", "--session", "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6", "--tanner", "127.0.0.1:1"});
        CHECK(r.code == webtrap::cli::kExitFailure);
        CHECK(r.err.find("cannot reach") != std::string::npos);
    }

    TEST_CASE("report rendering") {
        std::string doc = R"({"UUID":"u-1","IP address":"10.0.0.1","Location":["/"],"Port":5,"User Agents":["curl"],
            "Attack Types":["lfi","sqli"],"Possible owners":{"attacker":1.0,"crawler":0.0,"tool":0.0,"user":0.0},
            "Start time":"2020-07-09T23:41:39Z","End time":"2020-07-09T23:41:40Z","Requests":2,"Request rate":2.0,
            "Status":"finished"})";
        auto text = webtrap::cli::render_report(doc);
        for (auto s : {"u-1", "10.0.0.1", "lfi, sqli", "attacker: 1", "2020-07-09T23:41:39Z"}) {
            CHECK(text.find(s) != std::string::npos);
        }
        auto table = webtrap::cli::render_report_table({doc, doc});
        CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    }

    TEST_CASE("log directory defaults") {
        auto saved = std::getenv("XDG_STATE_HOME") ? std::optional<std::string>(std::getenv("XDG_STATE_HOME")) : std::nullopt;
        ::setenv("XDG_STATE_HOME", "/tmp/xdg-test", 1);
        CHECK(webtrap::cli::default_log_dir() == std::filesystem::path("/tmp/xdg-test/webtrap"));
        if (saved) ::setenv("XDG_STATE_HOME", saved->c_str(), 1);
        else ::unsetenv("XDG_STATE_HOME");
    }

    TEST_CASE("bad config content exits 1 naming the line") {
        TempDir dir;
        webtrap::testing::write_text(dir.path() / "bad.conf", "# fine\nxxe.oob_enabled = perhaps\n");
        auto r = run_cli({"analyze", "--config", (dir.path() / "bad.conf").string(), "--log-dir", dir.path().string()});
        CHECK(r.code == webtrap::cli::kExitFailure);
        CHECK(r.err.find("bad.conf:2") != std::string::npos);
    }

    TEST_CASE("analyze and serve run until interrupted") {
        FixtureSite site;
        webtrap::testing::add_standard_pages(site);
        site.start();
        TempDir dir;
        auto pages = dir.path() / "pages";
        REQUIRE(run_cli({"clone", "--target", site.url("/"), "--path", pages.string()}).code == 0);
        auto snapshot = dir.path() / "snapshot.jsonl";
        webtrap::testing::write_text(dir.path() / "webtrap.conf",
                                     "store.snapshot = " + snapshot.string() + "\nsession.reverse_dns = false\n");

        Child analyze({"analyze", "--listen", "127.0.0.1:0", "--config", (dir.path() / "webtrap.conf").string(),
                       "--log-dir", (dir.path() / "logs").string()});
        int aport = banner_port(analyze.read_until("(Press CTRL+C to quit)"));
        REQUIRE(aport > 0);

        Child serve({"serve", "--page-dir", pages.string(), "--tanner", "127.0.0.1:" + std::to_string(aport), "--listen",
                     "127.0.0.1:0", "--log-dir", (dir.path() / "logs").string()});
        auto banner = serve.read_until("(Press CTRL+C to quit)");
        CHECK(banner.find("serving with uuid") != std::string::npos);
        int sport = banner_port(banner);
        REQUIRE(sport > 0);

        httplib::Client cli("127.0.0.1", sport);
        auto res = cli.Get("/?q=%7B%7B7*7%7D%7D");
        REQUIRE(res);
        CHECK(res->body.find("49") != std::string::npos);
        CHECK(res->get_header_value("Server") == "nginx/1.16.1");
        auto uuid = res->get_header_value("Set-Cookie").substr(11, 36);

        auto report = run_cli({"report", "--session", uuid, "--tanner", "127.0.0.1:" + std::to_string(aport), "--json"});
        CHECK(report.code == 0);
        CHECK(report.out.find("template_injection") != std::string::npos);
        auto missing = run_cli({"report", "--session", "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6", "--tanner",
                                "127.0.0.1:" + std::to_string(aport)});
        CHECK(missing.code == 1);
        CHECK(missing.err.find("not found") != std::string::npos);
        auto all = run_cli({"report", "--all", "--tanner", "127.0.0.1:" + std::to_string(aport)});
        CHECK(all.code == 0);
        CHECK(all.out.find("1 sessions") != std::string::npos);

        CHECK(serve.interrupt_and_wait() == 0);
        CHECK(serve.output().find("stopped") != std::string::npos);
        CHECK(analyze.interrupt_and_wait() == 0);
        REQUIRE(std::filesystem::exists(snapshot));
        CHECK(webtrap::testing::read_text(snapshot).find(uuid) != std::string::npos);
        CHECK(std::filesystem::exists(dir.path() / "logs" / "analysis.log"));
        CHECK(std::filesystem::exists(dir.path() / "logs" / "surface.log"));
    }

    TEST_CASE("environment supplies defaults, flags win") {
        TempDir dir;
        ::setenv("WEBTRAP_TANNER", "127.0.0.1:1", 1);
        auto r = run_cli({"report", "--session", "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6"});
        CHECK(r.err.find("127.0.0.1:1") != std::string::npos);
        auto flag = run_cli({"report", "--session", "6f1b6ef5-c988-4910-8353-4fd5bb0a73b6", "--tanner", "127.0.0.1:2"});
        CHECK(flag.err.find("127.0.0.1:2") != std::string::npos);
        ::unsetenv("WEBTRAP_TANNER");
    }
}
