#include <doctest.h>

#include <set>

#include "webtrap/util/clock.hpp"
#include "webtrap/util/codec.hpp"
#include "webtrap/util/strings.hpp"
#include "webtrap/util/url.hpp"
#include "webtrap/util/uuid.hpp"

using namespace webtrap::util;

TEST_SUITE("util") {
    // digests frozen from Python's hashlib
    TEST_CASE("md5 of page paths") {
        CHECK(md5_hex("/") == "6666cd76f96956469e7be39d750cc7d9");
        CHECK(md5_hex("/foo") == "1effb2475fcfba4f9e8b8a1dbc8f3caf");
        CHECK(md5_hex("/foo/bar") == "1df481b1ec67d4d8bec721f521d4937d");
        CHECK(md5_hex("/img/logo.png") == "6f1b6ef5c98869100b3534ebfd661ce0");
        CHECK(md5_hex("/?q=1") == "3b0d9ea1b07ea17d262d7b79113da0c8");
        CHECK(md5_hex("") == "d41d8cd98f00b204e9800998ecf8427e");
    }

    TEST_CASE("base64") {
        CHECK(base64_encode("hello world") == "aGVsbG8gd29ybGQ=");
        CHECK(base64_decode("aGVsbG8gd29ybGQ=") == std::optional<std::string>("hello world"));
        CHECK(base64_encode("") == "");
        CHECK_FALSE(base64_decode("!!!").has_value());
        std::string bin;
        for (int i = 0; i < 256; ++i) bin += static_cast<char>(i);
        CHECK(base64_decode(base64_encode(bin)) == std::optional<std::string>(bin));
    }

    TEST_CASE("percent decoding happens exactly once") {
        CHECK(percent_decode("%2e%2e%2f") == "../");
        CHECK(percent_decode("%252e") == "%2e");
        CHECK(percent_decode("a+b") == "a+b");
        CHECK(percent_decode("a+b", true) == "a b");
        CHECK(percent_decode("%zz%4") == "%zz%4");
    }

    TEST_CASE("query parsing") {
        auto q = parse_query("a=1&b=%3Cx%3E&c&d=x+y");
        REQUIRE(q.size() == 4);
        CHECK(q[0] == std::pair<std::string, std::string>{"a", "1"});
        CHECK(q[1].second == "<x>");
        CHECK(q[2] == std::pair<std::string, std::string>{"c", ""});
        CHECK(q[3].second == "x y");
        CHECK(parse_query("").empty());
    }

    TEST_CASE("split_target drops the fragment") {
        auto [p, q] = split_target("/a/b?x=1#frag");
        CHECK(p == "/a/b");
        CHECK(q == "x=1");
        auto [p2, q2] = split_target("/plain");
        CHECK(p2 == "/plain");
        CHECK(q2.empty());
    }

    TEST_CASE("uuid v4") {
        std::set<std::string> seen;
        for (int i = 0; i < 200; ++i) {
            auto u = make_uuid_v4();
            CHECK(is_uuid_v4(u));
            CHECK(u.size() == 36);
            CHECK(u[14] == '4');
            seen.insert(u);
        }
        CHECK(seen.size() == 200);
        CHECK_FALSE(is_uuid_v4("6ba7b810-9dad-11d1-80b4-00c04fd430c8"));  // v1
        CHECK_FALSE(is_uuid_v4("not-a-uuid"));
        CHECK_FALSE(is_uuid_v4("593755d8-0aa4-4d88-a970-b5804f4dade7 "));
        CHECK(is_uuid_v4("593755d8-0aa4-4d88-a970-b5804f4dade7"));
    }

    TEST_CASE("timestamps") {
        CHECK(iso8601_utc(0) == "1970-01-01T00:00:00Z");
        CHECK(iso8601_utc(1594338099) == "2020-07-09T23:41:39Z");
        CHECK(unix_now() > 1.6e9);
    }

    TEST_CASE("string helpers") {
        CHECK(ifind("Hello WORLD", "world") == 6);
        CHECK(icontains("UNION select", "union SELECT"));
        CHECK(trim("  x \t") == "x");
        CHECK(split("a;b;;c", ';') == std::vector<std::string>{"a", "b", "", "c"});
        CHECK(iends_with("Crawl.GoogleBot.com", "googlebot.com"));
    }
}
