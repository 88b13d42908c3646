#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace webtrap::testing {

// Unique directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "webtrap-test");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Static website on loopback; pages are matched on the exact request target.
class FixtureSite {
public:
    FixtureSite();
    ~FixtureSite();
    void add(const std::string& target, const std::string& content_type, const std::string& body, int status = 200);
    int start();
    void stop();
    std::string url(const std::string& path = "/") const;
    std::size_t hits(const std::string& target) const;

private:
    struct Page {
        std::string content_type;
        std::string body;
        int status;
    };
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::map<std::string, Page> pages_;
    std::map<std::string, std::size_t> hits_;
};

// The standard three-level site: /, /foo (links "bar"), /foo/bar, plus
// /img/logo.png referenced from /.
void add_standard_pages(FixtureSite& site);

// Redis-compatible server speaking just enough RESP2 (PING, SET, GET, KEYS,
// DEL, FLUSHALL) for the store adapter.
class MiniRedis {
public:
    MiniRedis();
    ~MiniRedis();
    int start();
    void stop();
    std::size_t size() const;

private:
    void serve(int fd);
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::vector<std::thread> workers_;
    std::set<int> client_fds_;
    mutable std::mutex mu_;
    std::map<std::string, std::string> data_;
};

// Docker Engine API stand-in on a unix socket. Images must be pulled or
// built before containers can be created from them; shell containers echo
// their command line, template containers answer "49".
class FakeDocker {
public:
    explicit FakeDocker(std::filesystem::path socket_path);
    ~FakeDocker();
    void start();
    void stop();

    const std::filesystem::path& socket_path() const { return socket_path_; }
    std::size_t live_containers() const;
    std::size_t created() const;
    std::size_t builds() const;
    std::size_t pulls() const;
    std::size_t kills() const;
    // /wait blocks this long before answering
    void set_wait_delay(std::chrono::milliseconds delay) { wait_delay_ms_ = static_cast<int>(delay.count()); }

private:
    std::filesystem::path socket_path_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    mutable std::mutex mu_;
    std::set<std::string> images_;
    std::map<std::string, std::vector<std::string>> containers_;  // id -> Cmd
    std::size_t created_ = 0, builds_ = 0, pulls_ = 0, kills_ = 0;
    std::atomic<int> wait_delay_ms_{0};
};

}  // namespace webtrap::testing
