#include <fstream>
#include <spdlog/spdlog.h>

#include "webtrap/store/store.hpp"
#include "webtrap/util/clock.hpp"
#include "webtrap/util/uuid.hpp"

namespace webtrap::store {

std::string session_key(std::string_view uuid) { return std::string(kSessionPrefix) + std::string(uuid); }

void SessionStore::put_session(std::string_view uuid, const json& session) {
    if (!util::is_uuid_v4(uuid)) throw StoreError("session key is not a uuid-v4: " + std::string(uuid));
    put(session_key(uuid), session);
}

std::optional<json> SessionStore::get_session(std::string_view uuid) const {
    if (!util::is_uuid_v4(uuid)) return std::nullopt;
    return get(session_key(uuid));
}

std::vector<std::string> SessionStore::list_sessions(const std::optional<std::string>& attack) const {
    std::vector<std::string> out;
    for (const auto& key : keys(kSessionPrefix)) {
        std::string uuid = key.substr(kSessionPrefix.size());
        if (attack) {
            auto doc = get(key);
            if (!doc || !doc->is_object()) continue;
            auto counts = doc->find("attack_counts");
            if (counts == doc->end() || !counts->is_object()) continue;
            auto it = counts->find(*attack);
            if (it == counts->end() || !it->is_number() || it->get<double>() <= 0) continue;
        }
        out.push_back(std::move(uuid));
    }
    return out;
}

EmbeddedStore::EmbeddedStore(std::optional<std::filesystem::path> snapshot, std::chrono::milliseconds flush_interval)
    : snapshot_(std::move(snapshot)), flush_interval_(flush_interval) {
    if (snapshot_) {
        replay();
        flusher_ = std::thread([this] { flusher_loop(); });
    }
}

EmbeddedStore::~EmbeddedStore() {
    {
        std::lock_guard lock(stop_mu_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (flusher_.joinable()) flusher_.join();
    try {
        flush();
    } catch (const std::exception& e) {
        spdlog::error("final snapshot flush failed: {}", e.what());
    }
}

void EmbeddedStore::replay() {
    std::error_code ec;
    if (!std::filesystem::exists(*snapshot_, ec)) return;
    std::ifstream in(*snapshot_);
    if (!in) throw StoreError("cannot open snapshot " + snapshot_->string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("key") || !doc["key"].is_string()) {
            // a torn final line from a crash is expected; anything else is logged too
            spdlog::warn("snapshot {}:{} skipped (unparseable record)", snapshot_->string(), line_no);
            continue;
        }
        records_[doc["key"].get<std::string>()] = {doc.value("value", json()), doc.value("updated_at", "")};
    }
    in.close();

    // rewrite compacted so the log does not grow without bound
    auto tmp = *snapshot_;
    tmp += ".compact";
    {
        std::ofstream out(tmp, std::ios::trunc);
        for (const auto& [key, rec] : records_) {
            out << json{{"key", key}, {"value", rec.value}, {"updated_at", rec.updated_at}}.dump() << '\n';
        }
        if (!out) throw StoreError("cannot write snapshot " + tmp.string());
    }
    std::filesystem::rename(tmp, *snapshot_);
}

void EmbeddedStore::flusher_loop() {
    std::unique_lock lock(stop_mu_);
    while (!stopping_) {
        if (stop_cv_.wait_for(lock, flush_interval_, [this] { return stopping_; })) break;
        lock.unlock();
        try {
            flush();
        } catch (const std::exception& e) {
            spdlog::error("snapshot flush failed: {}", e.what());
        }
        lock.lock();
    }
}

void EmbeddedStore::put(const std::string& key, const json& value) {
    if (key.empty()) throw StoreError("empty key");
    std::string stamp = util::iso8601_utc(util::unix_now());
    {
        std::unique_lock lock(map_mu_);
        records_[key] = {value, std::move(stamp)};
    }
    if (snapshot_) {
        std::lock_guard lock(dirty_mu_);
        dirty_.insert(key);
    }
}

std::optional<json> EmbeddedStore::get(const std::string& key) const {
    std::shared_lock lock(map_mu_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second.value;
}

std::optional<std::string> EmbeddedStore::updated_at(const std::string& key) const {
    std::shared_lock lock(map_mu_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second.updated_at;
}

std::vector<std::string> EmbeddedStore::keys(std::string_view prefix) const {
    std::shared_lock lock(map_mu_);
    std::vector<std::string> out;
    for (auto it = records_.lower_bound(prefix); it != records_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
         ++it) {
        out.push_back(it->first);
    }
    return out;
}

std::size_t EmbeddedStore::size() const {
    std::shared_lock lock(map_mu_);
    return records_.size();
}

void EmbeddedStore::flush() {
    if (!snapshot_) return;
    std::lock_guard file_lock(file_mu_);
    std::set<std::string> batch;
    {
        std::lock_guard lock(dirty_mu_);
        batch.swap(dirty_);
    }
    if (batch.empty()) return;
    std::string lines;
    {
        std::shared_lock lock(map_mu_);
        for (const auto& key : batch) {
            auto it = records_.find(key);
            if (it == records_.end()) continue;
            lines += json{{"key", key}, {"value", it->second.value}, {"updated_at", it->second.updated_at}}.dump();
            lines += '\n';
        }
    }
    std::ofstream out(*snapshot_, std::ios::app | std::ios::binary);
    out << lines;
    out.flush();
    if (!out) {
        std::lock_guard lock(dirty_mu_);
        dirty_.insert(batch.begin(), batch.end());
        throw StoreError("cannot append to snapshot " + snapshot_->string());
    }
}

}  // namespace webtrap::store
