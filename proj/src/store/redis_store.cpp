#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <functional>

#include "webtrap/store/store.hpp"

namespace webtrap::store {

struct RedisStore::Reply {
    enum Kind { status, error, integer, bulk, nil, array } kind = nil;
    std::string text;
    long long number = 0;
    std::vector<Reply> items;
};

namespace {

class Reader {
public:
    explicit Reader(int fd) : fd_(fd) {}

    std::string line() {
        std::string out;
        for (;;) {
            char c = byte();
            if (c == '\r') {
                if (byte() != '\n') throw StoreError("redis: malformed line ending");
                return out;
            }
            out.push_back(c);
        }
    }

    std::string exactly(std::size_t n) {
        std::string out;
        out.reserve(n);
        while (out.size() < n) out.push_back(byte());
        return out;
    }

private:
    char byte() {
        if (pos_ == len_) {
            ssize_t r = ::recv(fd_, buf_, sizeof buf_, 0);
            if (r <= 0) throw StoreError("redis: connection lost");
            len_ = static_cast<std::size_t>(r);
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    int fd_;
    char buf_[4096];
    std::size_t pos_ = 0, len_ = 0;
};

}  // namespace

RedisStore::RedisStore(std::string host, int port, std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {
    std::lock_guard lock(mu_);
    connect_locked();
}

RedisStore::~RedisStore() {
    std::lock_guard lock(mu_);
    close_locked();
}

void RedisStore::close_locked() const {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void RedisStore::connect_locked() const {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0) {
        throw StoreError("redis: cannot resolve " + host_);
    }
    for (auto* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        timeval tv{};
        tv.tv_sec = timeout_.count() / 1000;
        tv.tv_usec = (timeout_.count() % 1000) * 1000;
        setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    freeaddrinfo(res);
    if (fd_ < 0) throw StoreError("redis: cannot connect to " + host_ + ":" + std::to_string(port_));
}

RedisStore::Reply RedisStore::command(const std::vector<std::string>& args) const {
    std::lock_guard lock(mu_);
    if (fd_ < 0) connect_locked();
    std::string wire = "*" + std::to_string(args.size()) + "\r\n";
    for (const auto& a : args) wire += "$" + std::to_string(a.size()) + "\r\n" + a + "\r\n";
    std::size_t sent = 0;
    while (sent < wire.size()) {
        ssize_t n = ::send(fd_, wire.data() + sent, wire.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            close_locked();
            throw StoreError("redis: send failed");
        }
        sent += static_cast<std::size_t>(n);
    }
    Reader reader(fd_);
    std::function<Reply()> parse = [&]() -> Reply {
        std::string head = reader.line();
        if (head.empty()) throw StoreError("redis: empty reply");
        Reply r;
        std::string rest = head.substr(1);
        switch (head[0]) {
            case '+': r.kind = Reply::status; r.text = rest; break;
            case '-': r.kind = Reply::error; r.text = rest; break;
            case ':': r.kind = Reply::integer; r.number = std::stoll(rest); break;
            case '$': {
                long long len = std::stoll(rest);
                if (len < 0) {
                    r.kind = Reply::nil;
                    break;
                }
                r.kind = Reply::bulk;
                r.text = reader.exactly(static_cast<std::size_t>(len));
                reader.exactly(2);
                break;
            }
            case '*': {
                long long n = std::stoll(rest);
                r.kind = n < 0 ? Reply::nil : Reply::array;
                for (long long i = 0; i < n; ++i) r.items.push_back(parse());
                break;
            }
            default:
                throw StoreError("redis: unknown reply type");
        }
        return r;
    };
    try {
        Reply r = parse();
        if (r.kind == Reply::error) throw StoreError("redis: " + r.text);
        return r;
    } catch (const StoreError&) {
        close_locked();
        throw;
    } catch (const std::exception& e) {
        close_locked();
        throw StoreError(std::string("redis: bad reply: ") + e.what());
    }
}

void RedisStore::put(const std::string& key, const json& value) {
    if (key.empty()) throw StoreError("empty key");
    command({"SET", key, value.dump()});
}

std::optional<json> RedisStore::get(const std::string& key) const {
    auto r = command({"GET", key});
    if (r.kind != Reply::bulk) return std::nullopt;
    auto doc = json::parse(r.text, nullptr, false);
    if (doc.is_discarded()) throw StoreError("redis: stored value for " + key + " is not JSON");
    return doc;
}

std::vector<std::string> RedisStore::keys(std::string_view prefix) const {
    std::string pattern;
    for (char c : prefix) {
        if (c == '*' || c == '?' || c == '[' || c == ']' || c == '\\') pattern.push_back('\\');
        pattern.push_back(c);
    }
    pattern.push_back('*');
    auto r = command({"KEYS", pattern});
    std::vector<std::string> out;
    for (const auto& item : r.items) {
        if (item.kind == Reply::bulk) out.push_back(item.text);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace webtrap::store
