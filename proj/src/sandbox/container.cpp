#include "webtrap/sandbox/container.hpp"

#include <sys/socket.h>

#include <cstdio>
#include <cstring>
#include <httplib.h>
#include <json.hpp>

#include "webtrap/sandbox/fixture_data.hpp"

namespace webtrap::sandbox {

namespace {

using nlohmann::json;

constexpr std::string_view kTemplateScript =
    "import sys\n"
    "engine, src = sys.argv[1], sys.argv[2]\n"
    "if engine == 'tornado':\n"
    "    from tornado.template import Template\n"
    "    out = Template(src).generate().decode()\n"
    "else:\n"
    "    from mako.template import Template\n"
    "    out = Template(src).render()\n"
    "sys.stdout.write(out)\n";

std::unique_ptr<httplib::Client> connect(const ContainerOptions& o, std::chrono::milliseconds read_timeout) {
    auto cli = std::make_unique<httplib::Client>(o.socket_path, 80);
    cli->set_address_family(AF_UNIX);
    cli->set_connection_timeout(std::chrono::seconds(1));
    cli->set_read_timeout(read_timeout);
    cli->set_write_timeout(std::chrono::seconds(5));
    return cli;
}

std::string describe(const httplib::Result& r) {
    if (!r) return httplib::to_string(r.error());
    return "HTTP " + std::to_string(r->status) + " " + r->body.substr(0, 200);
}

class ContainerGuard {
public:
    ContainerGuard(const ContainerOptions& o, std::string id) : options_(o), id_(std::move(id)) {}
    ~ContainerGuard() {
        auto cli = connect(options_, std::chrono::seconds(5));
        cli->Delete("/containers/" + id_ + "?force=1&v=1");
    }
    ContainerGuard(const ContainerGuard&) = delete;
    ContainerGuard& operator=(const ContainerGuard&) = delete;
    const std::string& id() const { return id_; }

private:
    const ContainerOptions& options_;
    std::string id_;
};

std::string image_ref_param(const std::string& image) {
    auto colon = image.rfind(':');
    if (colon == std::string::npos || image.find('/', colon) != std::string::npos) {
        return "fromImage=" + httplib::detail::encode_query_param(image) + "&tag=latest";
    }
    return "fromImage=" + httplib::detail::encode_query_param(image.substr(0, colon)) +
           "&tag=" + httplib::detail::encode_query_param(image.substr(colon + 1));
}

}  // namespace

std::string demux_docker_stream(std::string_view raw) {
    auto looks_framed = [](std::string_view s) {
        return s.size() >= 8 && (s[0] == 0 || s[0] == 1 || s[0] == 2) && s[1] == 0 && s[2] == 0 && s[3] == 0;
    };
    if (!looks_framed(raw)) return std::string(raw);
    std::string out;
    std::size_t i = 0;
    while (i + 8 <= raw.size()) {
        std::uint32_t len = 0;
        for (int k = 4; k < 8; ++k) len = (len << 8) | static_cast<unsigned char>(raw[i + k]);
        i += 8;
        std::size_t take = std::min<std::size_t>(len, raw.size() - i);
        out.append(raw.substr(i, take));
        i += take;
    }
    return out;
}

std::string make_tar(const std::vector<std::pair<std::string, std::string>>& files) {
    std::string out;
    for (const auto& [name, content] : files) {
        char header[512] = {};
        std::snprintf(header, 100, "%s", name.c_str());
        std::snprintf(header + 100, 8, "%07o", 0644);
        std::snprintf(header + 108, 8, "%07o", 0);
        std::snprintf(header + 116, 8, "%07o", 0);
        std::snprintf(header + 124, 12, "%011zo", content.size());
        std::snprintf(header + 136, 12, "%011o", 0);
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        std::memset(header + 148, ' ', 8);
        unsigned sum = 0;
        for (unsigned char c : header) sum += c;
        std::snprintf(header + 148, 8, "%06o", sum);
        header[155] = ' ';
        out.append(header, sizeof header);
        out += content;
        out.append((512 - content.size() % 512) % 512, '\0');
    }
    out.append(1024, '\0');
    return out;
}

ContainerBackend::ContainerBackend(ContainerOptions options) : options_(std::move(options)) {
    if (options_.template_recipe.empty()) {
        if (auto recipe = fixtures::embedded_file("docker/template_engines.Dockerfile")) {
            options_.template_recipe = std::string(*recipe);
        }
    }
}

std::size_t ContainerBackend::images_built() const {
    std::lock_guard lock(mu_);
    return builds_;
}

ContainerRun ContainerBackend::run_shell(std::string_view command_line, std::chrono::milliseconds timeout) {
    return run(options_.shell_image, {"sh", "-c", std::string(command_line)}, timeout);
}

ContainerRun ContainerBackend::run_template(std::string_view engine, std::string_view payload,
                                            std::chrono::milliseconds timeout) {
    ensure_template_image();
    return run(options_.template_image,
               {"python", "-c", std::string(kTemplateScript), std::string(engine), std::string(payload)}, timeout);
}

void ContainerBackend::ensure_template_image() {
    std::call_once(build_once_, [this] {
        auto cli = connect(options_, std::chrono::minutes(10));
        std::string context = make_tar({{"Dockerfile", options_.template_recipe}});
        auto res = cli->Post("/build?t=" + httplib::detail::encode_query_param(options_.template_image) + "&rm=1",
                             context, "application/x-tar");
        if (!res || res->status != 200) throw BackendUnavailable("image build failed: " + describe(res));
        std::lock_guard lock(mu_);
        ++builds_;
    });
}

ContainerRun ContainerBackend::run(const std::string& image, const std::vector<std::string>& cmd,
                                   std::chrono::milliseconds timeout) {
    auto cli = connect(options_, std::chrono::seconds(10));
    json spec = {
        {"Image", image},
        {"Cmd", cmd},
        {"NetworkDisabled", true},
        {"AttachStdout", false},
        {"AttachStderr", false},
        {"Tty", false},
        {"HostConfig", {{"NetworkMode", "none"}, {"Memory", options_.memory_limit}, {"ReadonlyRootfs", true}}},
    };
    auto res = cli->Post("/containers/create", spec.dump(), "application/json");
    if (res && res->status == 404) {
        auto pull = cli->Post("/images/create?" + image_ref_param(image), "", "application/json");
        if (!pull || pull->status != 200) throw BackendUnavailable("image pull failed: " + describe(pull));
        res = cli->Post("/containers/create", spec.dump(), "application/json");
    }
    if (!res || res->status != 201) throw BackendUnavailable("container create failed: " + describe(res));
    std::string id = json::parse(res->body, nullptr, false).value("Id", "");
    if (id.empty()) throw BackendUnavailable("container create returned no id");
    ContainerGuard guard(options_, id);

    auto started = cli->Post("/containers/" + id + "/start", "", "application/json");
    if (!started || (started->status != 204 && started->status != 304)) {
        throw BackendUnavailable("container start failed: " + describe(started));
    }

    ContainerRun out;
    auto waiter = connect(options_, timeout);
    auto waited = waiter->Post("/containers/" + id + "/wait", "", "application/json");
    if (!waited) {
        if (waited.error() != httplib::Error::Read) throw BackendUnavailable("container wait failed: " + describe(waited));
        out.timed_out = true;
        cli->Post("/containers/" + id + "/kill", "", "application/json");
    } else {
        auto body = json::parse(waited->body, nullptr, false);
        if (body.is_object()) out.exit_status = body.value("StatusCode", 0);
    }

    auto logs = cli->Get("/containers/" + id + "/logs?stdout=1&stderr=1");
    if (!logs || logs->status != 200) throw BackendUnavailable("container logs failed: " + describe(logs));
    out.output = demux_docker_stream(logs->body);
    return out;
}

}  // namespace webtrap::sandbox
