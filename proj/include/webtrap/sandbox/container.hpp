#pragma once

#include <chrono>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace webtrap::sandbox {

// The container runtime could not be reached or refused the request.
class BackendUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ContainerOptions {
    std::string socket_path = "/var/run/docker.sock";
    std::string shell_image = "busybox:latest";
    std::string template_image = "webtrap-template-engines:latest";
    // Dockerfile used to build template_image; empty selects the shipped recipe.
    std::string template_recipe;
    std::size_t memory_limit = 64 * 1024 * 1024;
};

struct ContainerRun {
    std::string output;
    int exit_status = 0;
    bool timed_out = false;
};

// Runs payloads in throwaway containers through the Docker Engine HTTP API
// on a local unix socket. Every container is force-removed before run()
// returns, including on error paths.
class ContainerBackend {
public:
    explicit ContainerBackend(ContainerOptions options = {});

    ContainerRun run_shell(std::string_view command_line, std::chrono::milliseconds timeout);
    // engine is "tornado" or "mako"
    ContainerRun run_template(std::string_view engine, std::string_view payload, std::chrono::milliseconds timeout);

    // Number of image builds issued by this backend (0 or 1).
    std::size_t images_built() const;

    const ContainerOptions& options() const { return options_; }

private:
    ContainerRun run(const std::string& image, const std::vector<std::string>& cmd, std::chrono::milliseconds timeout);
    void ensure_template_image();

    ContainerOptions options_;
    std::once_flag build_once_;
    mutable std::mutex mu_;
    std::size_t builds_ = 0;
};

// Splits a Docker attach/logs stream into payload bytes. Frames are an
// 8-byte header (stream, 0, 0, 0, big-endian length) followed by the data;
// input without frame headers (tty mode) is returned unchanged.
std::string demux_docker_stream(std::string_view raw);

// Minimal ustar archive holding the given (name, content) files.
std::string make_tar(const std::vector<std::pair<std::string, std::string>>& files);

}  // namespace webtrap::sandbox
