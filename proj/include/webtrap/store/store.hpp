#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace webtrap::store {

using json = nlohmann::json;

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kSessionPrefix = "session:";
inline constexpr std::string_view kStatsTotalsKey = "stats:totals";

std::string session_key(std::string_view uuid);

// Key-value contract shared by every backend. Keys are namespaced
// (`session:<uuid>`, `stats:...`); values are JSON documents.
class SessionStore {
public:
    virtual ~SessionStore() = default;

    virtual void put(const std::string& key, const json& value) = 0;
    virtual std::optional<json> get(const std::string& key) const = 0;
    virtual std::vector<std::string> keys(std::string_view prefix) const = 0;
    virtual void flush() {}

    // Throws StoreError unless uuid is a v4 UUID.
    void put_session(std::string_view uuid, const json& session);
    std::optional<json> get_session(std::string_view uuid) const;
    // uuids of every session, or of those whose attack_counts has attack > 0
    std::vector<std::string> list_sessions(const std::optional<std::string>& attack = std::nullopt) const;

    void put_stats(const json& totals) { put(std::string(kStatsTotalsKey), totals); }
    std::optional<json> get_stats() const { return get(std::string(kStatsTotalsKey)); }
};

// In-memory map with an append-only JSON-lines snapshot
// (`{"key","value","updated_at"}` per line). Dirty records are appended
// every flush_interval and on destruction; the file is replayed and
// compacted on open.
class EmbeddedStore : public SessionStore {
public:
    explicit EmbeddedStore(std::optional<std::filesystem::path> snapshot = std::nullopt,
                           std::chrono::milliseconds flush_interval = std::chrono::seconds(5));
    ~EmbeddedStore() override;

    EmbeddedStore(const EmbeddedStore&) = delete;
    EmbeddedStore& operator=(const EmbeddedStore&) = delete;

    void put(const std::string& key, const json& value) override;
    std::optional<json> get(const std::string& key) const override;
    std::vector<std::string> keys(std::string_view prefix) const override;
    void flush() override;

    std::size_t size() const;
    // updated_at of a record (ISO-8601 UTC), if present
    std::optional<std::string> updated_at(const std::string& key) const;

private:
    struct Record {
        json value;
        std::string updated_at;
    };

    void replay();
    void flusher_loop();

    std::optional<std::filesystem::path> snapshot_;
    std::chrono::milliseconds flush_interval_;

    mutable std::shared_mutex map_mu_;
    std::map<std::string, Record, std::less<>> records_;

    std::mutex dirty_mu_;
    std::set<std::string> dirty_;

    std::mutex file_mu_;

    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    std::thread flusher_;
};

// Adapter for a Redis-compatible server (RESP2 over TCP: SET, GET, KEYS).
class RedisStore : public SessionStore {
public:
    RedisStore(std::string host, int port, std::chrono::milliseconds timeout = std::chrono::seconds(2));
    ~RedisStore() override;

    RedisStore(const RedisStore&) = delete;
    RedisStore& operator=(const RedisStore&) = delete;

    void put(const std::string& key, const json& value) override;
    std::optional<json> get(const std::string& key) const override;
    std::vector<std::string> keys(std::string_view prefix) const override;

private:
    struct Reply;
    Reply command(const std::vector<std::string>& args) const;
    void connect_locked() const;
    void close_locked() const;

    std::string host_;
    int port_;
    std::chrono::milliseconds timeout_;
    mutable std::mutex mu_;
    mutable int fd_ = -1;
};

}  // namespace webtrap::store
