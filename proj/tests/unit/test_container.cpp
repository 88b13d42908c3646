#include <doctest.h>

#include "support.hpp"
#include "webtrap/sandbox/sandbox.hpp"

using namespace webtrap::sandbox;
using webtrap::testing::FakeDocker;
using webtrap::testing::TempDir;

namespace {

ContainerOptions options_for(const FakeDocker& docker) {
    ContainerOptions o;
    o.socket_path = docker.socket_path().string();
    return o;
}

}  // namespace

TEST_SUITE("container") {
    TEST_CASE("stream demux and tar") {
        std::string framed;
        framed += std::string("\x01\0\0\0\0\0\0\x03", 8) + "ab\n";
        framed += std::string("\x02\0\0\0\0\0\0\x02", 8) + "c\n";
        CHECK(demux_docker_stream(framed) == "ab\nc\n");
        CHECK(demux_docker_stream("plain tty") == "plain tty");
        auto tar = make_tar({{"Dockerfile", "FROM busybox\n"}});
        CHECK(tar.size() % 512 == 0);
        CHECK(tar.substr(257, 5) == "ustar");
        CHECK(tar.compare(0, 10, "Dockerfile") == 0);
    }

    TEST_CASE("shell run pulls on demand and leaves no container behind") {
        TempDir dir;
        FakeDocker docker(dir.path() / "docker.sock");
        docker.start();
        ContainerBackend backend(options_for(docker));
        auto run = backend.run_shell("echo hello", std::chrono::seconds(2));
        CHECK(run.output == "hello\n");
        CHECK_FALSE(run.timed_out);
        CHECK(docker.pulls() == 1);
        CHECK(docker.live_containers() == 0);
        backend.run_shell("echo again", std::chrono::seconds(2));
        CHECK(docker.pulls() == 1);
        CHECK(docker.created() == 2);
        CHECK(docker.live_containers() == 0);
    }

    TEST_CASE("template image is built once") {
        TempDir dir;
        FakeDocker docker(dir.path() / "docker.sock");
        docker.start();
        ContainerBackend backend(options_for(docker));
        CHECK(backend.run_template("tornado", "{{7*7}}", std::chrono::seconds(2)).output == "49");
        CHECK(backend.run_template("mako", "${7*7}", std::chrono::seconds(2)).output == "49");
        CHECK(docker.builds() == 1);
        CHECK(backend.images_built() == 1);
        CHECK(docker.live_containers() == 0);
    }

    TEST_CASE("timeout kills and still removes the container") {
        TempDir dir;
        FakeDocker docker(dir.path() / "docker.sock");
        docker.start();
        docker.set_wait_delay(std::chrono::milliseconds(1500));
        ContainerBackend backend(options_for(docker));
        auto run = backend.run_shell("echo slow", std::chrono::milliseconds(200));
        CHECK(run.timed_out);
        CHECK(docker.kills() == 1);
        CHECK(docker.live_containers() == 0);
    }

    TEST_CASE("sandbox routes through the container backend") {
        TempDir dir;
        FakeDocker docker(dir.path() / "docker.sock");
        docker.start();
        SandboxConfig cfg;
        cfg.backend = Backend::container;
        cfg.container = options_for(docker);
        Sandbox sb(cfg);
        auto r = sb.execute({ExecKind::shell, "echo boxed"});
        CHECK(r.output == "boxed\n");
        CHECK(r.backend == Backend::container);
        // sql never leaves the process
        CHECK(sb.execute({ExecKind::sql, "SELECT id FROM users WHERE id=1"}).backend == Backend::simulated);
    }

    TEST_CASE("unreachable runtime raises BackendUnavailable") {
        ContainerOptions o;
        o.socket_path = "/nonexistent/docker.sock";
        ContainerBackend backend(o);
        CHECK_THROWS_AS(backend.run_shell("echo x", std::chrono::seconds(1)), BackendUnavailable);
    }
}
