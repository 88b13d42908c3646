#include <doctest.h>

#include <random>

#include "webtrap/sandbox/php_subset.hpp"
#include "webtrap/sandbox/php_value.hpp"
#include "webtrap/sandbox/sandbox.hpp"

using namespace webtrap::sandbox;

namespace {

PhpValue random_value(std::mt19937& rng, int depth) {
    auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
    auto random_string = [&] {
        std::string s;
        int len = pick(12);
        for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(pick(256)));  // raw bytes, quotes and NULs included
        return s;
    };
    int kind = depth >= 3 ? pick(5) : pick(7);
    switch (kind) {
        case 0: return {PhpNull{}};
        case 1: return {pick(2) == 1};
        case 2: return {static_cast<std::int64_t>(rng()) - (std::int64_t{1} << 31)};
        case 3: {
            std::uniform_real_distribution<double> d(-1e6, 1e6);
            return {d(rng)};
        }
        case 4: return {random_string()};
        default: {
            std::vector<PhpEntry> entries;
            int n = pick(4);
            for (int i = 0; i < n; ++i) {
                PhpValue key = pick(2) ? PhpValue{static_cast<std::int64_t>(i)} : PhpValue{"k" + std::to_string(i)};
                entries.push_back({key, random_value(rng, depth + 1)});
            }
            if (kind == 5) return {PhpArray{std::move(entries)}};
            return {PhpObject{"C" + std::to_string(pick(100)), std::move(entries)}};
        }
    }
}

PhpHost test_host() {
    PhpHost host;
    host.shell = [](std::string_view cmd) {
        return exec_shell(cmd, VirtualFilesystem::fixture()).output;
    };
    host.read_file = [](std::string_view p) { return read_stream(p, VirtualFilesystem::fixture()); };
    return host;
}

}  // namespace

TEST_SUITE("php") {
    TEST_CASE("grammar examples") {
        auto obj = unserialize_php(R"(O:3:"Foo":1:{s:1:"a";i:7;})");
        REQUIRE(std::holds_alternative<PhpObject>(obj.data));
        const auto& o = std::get<PhpObject>(obj.data);
        CHECK(o.class_name == "Foo");
        REQUIRE(o.properties.size() == 1);
        CHECK(o.properties[0].key == PhpValue{std::string("a")});
        CHECK(o.properties[0].value == PhpValue{std::int64_t{7}});
        CHECK(var_dump(obj) == "object(Foo)#1 (1) {\n  [\"a\"]=>\n  int(7)\n}\n");

        CHECK(unserialize_php("i:42;") == PhpValue{std::int64_t{42}});
        CHECK(var_dump(unserialize_php("i:42;")) == "int(42)\n");

        auto arr = unserialize_php(R"(a:2:{i:0;s:1:"x";i:1;s:1:"y";})");
        CHECK(var_dump(arr) ==
              "array(2) {\n  [0]=>\n  string(1) \"x\"\n  [1]=>\n  string(1) \"y\"\n}\n");
    }

    TEST_CASE("scalars") {
        CHECK(unserialize_php("N;") == PhpValue{PhpNull{}});
        CHECK(unserialize_php("b:1;") == PhpValue{true});
        CHECK(unserialize_php("d:0.5;") == PhpValue{0.5});
        CHECK(unserialize_php("s:3:\"a\"b\";") == PhpValue{std::string("a\"b")});
        CHECK(serialize_php(PhpValue{std::string("hé")}) == "s:3:\"hé\";");
    }

    TEST_CASE("violations carry a byte offset") {
        try {
            unserialize_php(R"(s:5:"abc";)");
            FAIL("accepted a wrong length");
        } catch (const PhpParseError& e) {
            CHECK(e.offset() > 0);
            CHECK(e.offset() == 10);  // where the closing quote should be
        }
        CHECK_THROWS_AS(unserialize_php("i:42;x"), PhpParseError);
        CHECK_THROWS_AS(unserialize_php("i:;"), PhpParseError);
        CHECK_THROWS_AS(unserialize_php("a:1:{i:0;}"), PhpParseError);
        CHECK_THROWS_AS(unserialize_php("b:2;"), PhpParseError);
        CHECK_THROWS_AS(unserialize_php(""), PhpParseError);
        CHECK_THROWS_AS(unserialize_php(R"(O:4:"Foo":0:{})"), PhpParseError);
    }

    TEST_CASE("random trees round-trip") {
        std::mt19937 rng(20200709);
        for (int i = 0; i < 1000; ++i) {
            auto v = random_value(rng, 0);
            auto text = serialize_php(v);
            CHECK(unserialize_php(text) == v);
            CHECK(serialize_php(unserialize_php(text)) == text);
        }
    }

    TEST_CASE("object classes in wakeup order") {
        auto v = unserialize_php(R"(O:1:"A":1:{s:1:"b";O:1:"B":0:{}})");
        CHECK(object_classes(v) == std::vector<std::string>{"A", "B"});
    }

    TEST_CASE("float formatting") {
        CHECK(php_float_repr(0.1) == "0.1");
        CHECK(php_float_repr(1.0) == "1");
        CHECK(php_float_repr(1e25) == "1.0E+25");
    }

    TEST_CASE("code subset") {
        auto host = test_host();
        CHECK(run_php_code("echo 'x'.'y';", host).output == "xy");
        auto assign = run_php_code("$a = 1 + 2; echo $a;", host);
        CHECK(assign.output == "3");
        CHECK(run_php_code("system('echo hi');", host).output == "hi\n");
        CHECK(run_php_code("echo \"v=$b\";", host).ok);
        CHECK(run_php_code("$b = 'q'; echo \"v=$b\";", host).output == "v=q");
        CHECK(run_php_code("echo strtoupper('ab') . strlen('abc');", host).output == "AB3");
        CHECK(run_php_code("echo base64_encode('hello world');", host).output == "aGVsbG8gd29ybGQ=");
        CHECK(run_php_code("echo md5('/');", host).output == "6666cd76f96956469e7be39d750cc7d9");
        CHECK(run_php_code("echo file_get_contents('/etc/hostname');", host).output == "web-prod-02\n");
        CHECK_FALSE(run_php_code("include 'x.php';", host).ok);
        CHECK_FALSE(run_php_code("class A {}", host).ok);
    }

    TEST_CASE("source mode keeps text outside tags") {
        auto host = test_host();
        CHECK(run_php_source("<?php echo 'pwn'; ?>", host).output == "pwn");
        CHECK(run_php_source("a<?php echo 1+1; ?>b", host).output == "a2b");
        CHECK(run_php_source("plain", host).output == "plain");
    }
}
