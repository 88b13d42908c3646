#include <doctest.h>

#include <thread>

#include "support.hpp"
#include "webtrap/store/store.hpp"
#include "webtrap/util/uuid.hpp"

using namespace webtrap::store;
using webtrap::testing::TempDir;

namespace {

json session_doc(const std::string& uuid, std::map<std::string, int> attacks = {}) {
    return {{"uuid", uuid}, {"request_count", 1}, {"attack_counts", attacks}};
}

// Shared contract every backend has to satisfy.
void check_contract(SessionStore& store) {
    auto a = webtrap::util::make_uuid_v4();
    auto b = webtrap::util::make_uuid_v4();
    store.put_session(a, session_doc(a, {{"sqli", 1}}));
    store.put_session(b, session_doc(b, {{"xss", 0}}));
    CHECK(store.get_session(a)->at("attack_counts").at("sqli") == 1);
    CHECK_FALSE(store.get_session(webtrap::util::make_uuid_v4()).has_value());

    // upsert replaces
    auto updated = session_doc(a, {{"sqli", 2}});
    store.put_session(a, updated);
    CHECK(*store.get_session(a) == updated);

    auto all = store.list_sessions();
    CHECK(std::count(all.begin(), all.end(), a) == 1);
    CHECK(std::count(all.begin(), all.end(), b) == 1);
    auto sqli = store.list_sessions(std::string("sqli"));
    CHECK(std::count(sqli.begin(), sqli.end(), a) == 1);
    CHECK(std::count(sqli.begin(), sqli.end(), b) == 0);
    CHECK(store.list_sessions(std::string("xss")).empty());

    CHECK_THROWS_AS(store.put_session("not-a-uuid", json::object()), StoreError);
    CHECK_THROWS_AS(store.put_session("6666cd76-f969-1956-a69e-7be39d750cc7", json::object()), StoreError);

    // stats live in their own namespace
    store.put_stats({{"sqli", 3}});
    CHECK(store.get_stats()->at("sqli") == 3);
    for (const auto& k : store.keys(kSessionPrefix)) CHECK(k.rfind("session:", 0) == 0);
    CHECK(store.keys("stats:") == std::vector<std::string>{"stats:totals"});

    // values round-trip byte for byte
    json odd = {{"uuid", a}, {"s", std::string("quote\" nl\n nul\0x", 13)}, {"f", 0.1}, {"n", json(nullptr)}};
    store.put_session(a, odd);
    CHECK(*store.get_session(a) == odd);
}

}  // namespace

TEST_SUITE("store") {
    TEST_CASE("session keys") {
        CHECK(session_key("abc") == "session:abc");
    }

    TEST_CASE("embedded store contract") {
        EmbeddedStore store;
        check_contract(store);
    }

    TEST_CASE("embedded store holds a thousand sessions") {
        EmbeddedStore store;
        std::vector<std::string> ids;
        for (int i = 0; i < 1000; ++i) {
            ids.push_back(webtrap::util::make_uuid_v4());
            store.put_session(ids.back(), session_doc(ids.back(), {{"lfi", i % 2}}));
        }
        CHECK(store.list_sessions().size() == 1000);
        CHECK(store.list_sessions(std::string("lfi")).size() == 500);
        for (const auto& id : ids) CHECK(store.get_session(id)->at("uuid") == id);
        CHECK(store.updated_at(session_key(ids[0])).has_value());
    }

    TEST_CASE("snapshot survives a restart and is compacted") {
        TempDir dir;
        auto path = dir.path() / "snap.jsonl";
        auto id = webtrap::util::make_uuid_v4();
        {
            EmbeddedStore store(path, std::chrono::hours(1));
            store.put_session(id, session_doc(id, {{"sqli", 1}}));
            store.put_session(id, session_doc(id, {{"sqli", 2}}));
            store.flush();
            store.put_session(id, session_doc(id, {{"sqli", 3}}));
        }  // destructor flushes the last write
        {
            EmbeddedStore store(path);
            CHECK(store.get_session(id)->at("attack_counts").at("sqli") == 3);
            CHECK(store.size() == 1);
        }
        auto lines = webtrap::testing::read_text(path);
        CHECK(std::count(lines.begin(), lines.end(), '\n') == 1);
        auto rec = json::parse(lines.substr(0, lines.find('\n')));
        CHECK(rec.at("key") == session_key(id));
        CHECK(rec.contains("updated_at"));
    }

    TEST_CASE("background flusher writes dirty records") {
        TempDir dir;
        auto path = dir.path() / "snap.jsonl";
        EmbeddedStore store(path, std::chrono::milliseconds(50));
        auto id = webtrap::util::make_uuid_v4();
        store.put_session(id, session_doc(id));
        for (int i = 0; i < 100 && !std::filesystem::exists(path); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
        REQUIRE(std::filesystem::exists(path));
        CHECK(webtrap::testing::read_text(path).find(id) != std::string::npos);
    }

    TEST_CASE("torn last line is ignored on replay") {
        TempDir dir;
        auto path = dir.path() / "snap.jsonl";
        auto id = webtrap::util::make_uuid_v4();
        webtrap::testing::write_text(
            path, json({{"key", session_key(id)}, {"value", session_doc(id)}, {"updated_at", "2020-07-09T23:41:39Z"}}).dump() +
                      "\n{\"key\":\"session:trunc");
        EmbeddedStore store(path);
        CHECK(store.get_session(id).has_value());
        CHECK(store.size() == 1);
    }

    TEST_CASE("redis store contract") {
        webtrap::testing::MiniRedis redis;
        int port = redis.start();
        RedisStore store("127.0.0.1", port);
        check_contract(store);
        CHECK(redis.size() == 3);
    }

    TEST_CASE("redis store reconnects and reports outages") {
        auto id = webtrap::util::make_uuid_v4();
        int port = 0;
        {
            webtrap::testing::MiniRedis redis;
            port = redis.start();
            RedisStore store("127.0.0.1", port, std::chrono::milliseconds(500));
            store.put_session(id, session_doc(id));
            redis.stop();
            CHECK_THROWS_AS(store.put_session(id, session_doc(id)), StoreError);
        }
        // connecting is eager, so a dead server fails at startup
        CHECK_THROWS_AS(RedisStore("127.0.0.1", port, std::chrono::milliseconds(200)), StoreError);
    }
}
