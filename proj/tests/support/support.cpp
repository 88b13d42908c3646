#include "support.hpp"

#include <arpa/inet.h>
#include <fnmatch.h>
#include <httplib.h>
#include <json.hpp>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace webtrap::testing {

TempDir::TempDir(const std::string& prefix) {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto candidate = std::filesystem::temp_directory_path() / (prefix + "-" + std::to_string(rd()));
        if (std::filesystem::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

FixtureSite::FixtureSite() : server_(std::make_unique<httplib::Server>()) {
    server_->Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        ++hits_[req.target];
        auto it = pages_.find(req.target);
        if (it == pages_.end()) it = pages_.find(req.path);
        if (it == pages_.end()) {
            res.status = 404;
            res.set_content("missing", "text/plain");
            return;
        }
        res.status = it->second.status;
        res.set_content(it->second.body, it->second.content_type);
    });
}

FixtureSite::~FixtureSite() { stop(); }

void FixtureSite::add(const std::string& target, const std::string& content_type, const std::string& body, int status) {
    std::lock_guard lock(mu_);
    pages_[target] = {content_type, body, status};
}

int FixtureSite::start() {
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void FixtureSite::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::string FixtureSite::url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
}

std::size_t FixtureSite::hits(const std::string& target) const {
    std::lock_guard lock(mu_);
    auto it = hits_.find(target);
    return it == hits_.end() ? 0 : it->second;
}

void add_standard_pages(FixtureSite& site) {
    site.add("/", "text/html",
             "<html><head><title>Acme Corp</title></head><body><h1>Acme</h1>"
             "<a href=\"/foo\">Products</a><img src=\"/img/logo.png\"></body></html>");
    site.add("/foo", "text/html", "<html><body><p>Products</p><a href=\"bar\">More</a></body></html>");
    site.add("/foo/bar", "text/html", "<html><body><p>Details</p></body></html>");
    site.add("/img/logo.png", "image/png", std::string("\x89PNG\r\n\x1a\n", 8) + "logo");
}

// --- MiniRedis -------------------------------------------------------------

namespace {

bool read_line(int fd, std::string& buf, std::string& line) {
    for (;;) {
        auto pos = buf.find("\r\n");
        if (pos != std::string::npos) {
            line = buf.substr(0, pos);
            buf.erase(0, pos + 2);
            return true;
        }
        char tmp[4096];
        auto n = ::recv(fd, tmp, sizeof tmp, 0);
        if (n <= 0) return false;
        buf.append(tmp, static_cast<std::size_t>(n));
    }
}

bool read_exact(int fd, std::string& buf, std::size_t n, std::string& out) {
    while (buf.size() < n + 2) {
        char tmp[4096];
        auto got = ::recv(fd, tmp, sizeof tmp, 0);
        if (got <= 0) return false;
        buf.append(tmp, static_cast<std::size_t>(got));
    }
    out = buf.substr(0, n);
    buf.erase(0, n + 2);
    return true;
}

void send_all(int fd, const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
        auto n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
        if (n <= 0) return;
        off += static_cast<std::size_t>(n);
    }
}

std::string bulk(const std::string& s) { return "$" + std::to_string(s.size()) + "\r\n" + s + "\r\n"; }

}  // namespace

MiniRedis::MiniRedis() = default;
MiniRedis::~MiniRedis() { stop(); }

int MiniRedis::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        throw std::runtime_error("MiniRedis bind failed");
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] {
        while (!stopping_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) break;
            std::lock_guard lock(mu_);
            client_fds_.insert(fd);
            workers_.emplace_back([this, fd] { serve(fd); });
        }
    });
    return port_;
}

void MiniRedis::stop() {
    if (listen_fd_ < 0) return;
    stopping_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mu_);
        for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

std::size_t MiniRedis::size() const {
    std::lock_guard lock(mu_);
    return data_.size();
}

void MiniRedis::serve(int fd) {
    std::string buf, line;
    while (read_line(fd, buf, line)) {
        if (line.empty() || line[0] != '*') break;
        int argc = std::stoi(line.substr(1));
        std::vector<std::string> args;
        bool ok = true;
        for (int i = 0; i < argc && ok; ++i) {
            std::string arg;
            ok = read_line(fd, buf, line) && !line.empty() && line[0] == '$' &&
                 read_exact(fd, buf, static_cast<std::size_t>(std::stoll(line.substr(1))), arg);
            args.push_back(std::move(arg));
        }
        if (!ok || args.empty()) break;
        std::string cmd;
        for (char c : args[0]) cmd += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        std::string reply;
        {
            std::lock_guard lock(mu_);
            if (cmd == "PING") {
                reply = "+PONG\r\n";
            } else if (cmd == "SET" && args.size() == 3) {
                data_[args[1]] = args[2];
                reply = "+OK\r\n";
            } else if (cmd == "GET" && args.size() == 2) {
                auto it = data_.find(args[1]);
                reply = it == data_.end() ? "$-1\r\n" : bulk(it->second);
            } else if (cmd == "DEL") {
                int n = 0;
                for (std::size_t i = 1; i < args.size(); ++i) n += static_cast<int>(data_.erase(args[i]));
                reply = ":" + std::to_string(n) + "\r\n";
            } else if (cmd == "KEYS" && args.size() == 2) {
                std::vector<std::string> keys;
                for (const auto& [k, _] : data_) {
                    if (::fnmatch(args[1].c_str(), k.c_str(), 0) == 0) keys.push_back(k);
                }
                reply = "*" + std::to_string(keys.size()) + "\r\n";
                for (const auto& k : keys) reply += bulk(k);
            } else if (cmd == "FLUSHALL") {
                data_.clear();
                reply = "+OK\r\n";
            } else {
                reply = "-ERR unknown command '" + args[0] + "'\r\n";
            }
        }
        send_all(fd, reply);
    }
    std::lock_guard lock(mu_);
    client_fds_.erase(fd);
    ::close(fd);
}

// --- FakeDocker ------------------------------------------------------------

namespace {

std::string frame(int stream, const std::string& data) {
    std::string out(8, '\0');
    out[0] = static_cast<char>(stream);
    auto n = static_cast<std::uint32_t>(data.size());
    out[4] = static_cast<char>((n >> 24) & 0xff);
    out[5] = static_cast<char>((n >> 16) & 0xff);
    out[6] = static_cast<char>((n >> 8) & 0xff);
    out[7] = static_cast<char>(n & 0xff);
    return out + data;
}

}  // namespace

FakeDocker::FakeDocker(std::filesystem::path socket_path)
    : socket_path_(std::move(socket_path)), server_(std::make_unique<httplib::Server>()) {
    using nlohmann::json;
    auto& s = *server_;
    s.Post("/images/create", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        images_.insert(req.get_param_value("fromImage") + ":" + req.get_param_value("tag"));
        ++pulls_;
        res.set_content("{\"status\":\"Downloaded\"}\n", "application/json");
    });
    s.Post("/build", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        if (req.body.size() < 512 || req.body.compare(257, 5, "ustar") != 0) {
            res.status = 400;
            res.set_content("{\"message\":\"bad context\"}", "application/json");
            return;
        }
        images_.insert(req.get_param_value("t"));
        ++builds_;
        res.set_content("{\"stream\":\"Successfully built\"}\n", "application/json");
    });
    s.Post("/containers/create", [this](const httplib::Request& req, httplib::Response& res) {
        auto spec = json::parse(req.body, nullptr, false);
        std::lock_guard lock(mu_);
        std::string image = spec.value("Image", "");
        if (!images_.count(image)) {
            res.status = 404;
            res.set_content("{\"message\":\"No such image: " + image + "\"}", "application/json");
            return;
        }
        std::string id = "c" + std::to_string(++created_);
        containers_[id] = spec.value("Cmd", std::vector<std::string>{});
        res.status = 201;
        res.set_content(json{{"Id", id}, {"Warnings", json::array()}}.dump(), "application/json");
    });
    s.Post(R"(/containers/([^/]+)/start)", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        res.status = containers_.count(req.matches[1]) ? 204 : 404;
    });
    s.Post(R"(/containers/([^/]+)/wait)", [this](const httplib::Request&, httplib::Response& res) {
        if (int ms = wait_delay_ms_.load(); ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        res.set_content("{\"StatusCode\":0}", "application/json");
    });
    s.Post(R"(/containers/([^/]+)/kill)", [this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        ++kills_;
        res.status = 204;
    });
    s.Get(R"(/containers/([^/]+)/logs)", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        auto it = containers_.find(req.matches[1]);
        if (it == containers_.end()) {
            res.status = 404;
            return;
        }
        const auto& cmd = it->second;
        std::string out;
        if (cmd.size() == 3 && cmd[0] == "sh" && cmd[2].rfind("echo ", 0) == 0) out = cmd[2].substr(5) + "\n";
        else if (!cmd.empty() && cmd[0] == "python") out = "49";
        else out = "ran\n";
        res.set_content(frame(1, out), "application/vnd.docker.raw-stream");
    });
    s.Delete(R"(/containers/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu_);
        res.status = containers_.erase(req.matches[1]) ? 204 : 404;
    });
}

FakeDocker::~FakeDocker() { stop(); }

void FakeDocker::start() {
    std::filesystem::remove(socket_path_);
    server_->set_address_family(AF_UNIX);
    if (!server_->bind_to_port(socket_path_.string(), 80)) throw std::runtime_error("FakeDocker bind failed");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void FakeDocker::stop() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

std::size_t FakeDocker::live_containers() const {
    std::lock_guard lock(mu_);
    return containers_.size();
}
std::size_t FakeDocker::created() const {
    std::lock_guard lock(mu_);
    return created_;
}
std::size_t FakeDocker::builds() const {
    std::lock_guard lock(mu_);
    return builds_;
}
std::size_t FakeDocker::pulls() const {
    std::lock_guard lock(mu_);
    return pulls_;
}
std::size_t FakeDocker::kills() const {
    std::lock_guard lock(mu_);
    return kills_;
}

}  // namespace webtrap::testing
