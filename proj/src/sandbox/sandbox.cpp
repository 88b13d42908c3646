#include "webtrap/sandbox/sandbox.hpp"

#include <spdlog/spdlog.h>

#include <stdexcept>

namespace webtrap::sandbox {

std::string_view to_string(Backend backend) {
    return backend == Backend::container ? "container" : "simulated";
}

std::optional<Backend> parse_backend(std::string_view text) {
    if (text == "simulated") return Backend::simulated;
    if (text == "container") return Backend::container;
    return std::nullopt;
}

Sandbox::Sandbox(SandboxConfig config)
    : config_(std::move(config)), vfs_(VirtualFilesystem::fixture()), db_(config_.seed) {
    if (!config_.http_get) config_.http_get = default_http_getter();
    if (config_.backend == Backend::container) container_ = std::make_unique<ContainerBackend>(config_.container);
}

ShellResult Sandbox::shell(std::string_view command_line, std::chrono::milliseconds timeout) {
    if (container_) {
        try {
            auto run = container_->run_shell(command_line, timeout);
            ShellResult r{std::move(run.output), run.exit_status, run.timed_out};
            if (r.output.size() > kOutputLimit) {
                r.output.resize(kOutputLimit);
                r.truncated = true;
            }
            return r;
        } catch (const BackendUnavailable& e) {
            spdlog::warn("container backend unavailable, using simulated shell: {}", e.what());
        }
    }
    return exec_shell(command_line, vfs_, Deadline(timeout));
}

TemplateOutcome Sandbox::render_template(TemplateEngine engine, std::string_view payload,
                                         std::chrono::milliseconds timeout) {
    if (container_) {
        try {
            auto run = container_->run_template(engine == TemplateEngine::tornado_style ? "tornado" : "mako",
                                                payload, timeout);
            TemplateOutcome out;
            out.ok = run.exit_status == 0 && !run.timed_out;
            (out.ok ? out.rendered : out.error) = run.output.substr(0, kOutputLimit);
            return out;
        } catch (const BackendUnavailable& e) {
            spdlog::warn("container backend unavailable, using simulated templates: {}", e.what());
        }
    }
    return eval_template(engine, payload, Deadline(timeout));
}

XmlOutcome Sandbox::xml(std::string_view document, const std::optional<std::string>& collector) {
    return resolve_xml(document, vfs_, collector, config_.http_get);
}

SqlOutcome Sandbox::sql(std::string_view query) const { return run_sql(query, db_); }

PhpHost Sandbox::php_host(const Deadline& deadline) {
    PhpHost host;
    host.shell = [this, &deadline](std::string_view cmd) { return exec_shell(cmd, vfs_, deadline).output; };
    host.read_file = [this](std::string_view target) { return read_stream(target, vfs_, "/var/www/html"); };
    return host;
}

PhpRunResult Sandbox::php(std::string_view code, std::chrono::milliseconds timeout) {
    Deadline deadline(timeout);
    return run_php_code(code, php_host(deadline), deadline);
}

PhpRunResult Sandbox::php_source(std::string_view source, std::chrono::milliseconds timeout) {
    Deadline deadline(timeout);
    return run_php_source(source, php_host(deadline), deadline);
}

ExecutionResult Sandbox::execute(const ExecutionRequest& request) {
    if (request.timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
    Backend wanted = request.backend.value_or(config_.backend);
    ExecutionResult out;
    out.backend = Backend::simulated;

    // a per-request container choice on a simulated sandbox still needs a client
    std::unique_ptr<ContainerBackend> temporary;
    ContainerBackend* backend = container_.get();
    if (wanted == Backend::container && !backend) {
        temporary = std::make_unique<ContainerBackend>(config_.container);
        backend = temporary.get();
    }
    if (wanted == Backend::simulated) backend = nullptr;

    switch (request.kind) {
        case ExecKind::shell: {
            if (backend) {
                try {
                    auto run = backend->run_shell(request.input, request.timeout);
                    out.ok = !run.timed_out;
                    out.output = run.output.substr(0, kOutputLimit);
                    out.truncated = run.timed_out || run.output.size() > kOutputLimit;
                    out.backend = Backend::container;
                    return out;
                } catch (const BackendUnavailable& e) {
                    spdlog::warn("container backend unavailable, using simulated shell: {}", e.what());
                }
            }
            auto r = exec_shell(request.input, vfs_, Deadline(request.timeout));
            out.ok = true;
            out.output = std::move(r.output);
            out.truncated = r.truncated;
            return out;
        }
        case ExecKind::template_eval: {
            auto engine = detect_template_engine(request.input).value_or(TemplateEngine::tornado_style);
            if (backend) {
                try {
                    auto run = backend->run_template(engine == TemplateEngine::tornado_style ? "tornado" : "mako",
                                                     request.input, request.timeout);
                    out.ok = run.exit_status == 0 && !run.timed_out;
                    out.output = run.output.substr(0, kOutputLimit);
                    out.truncated = run.timed_out;
                    out.backend = Backend::container;
                    return out;
                } catch (const BackendUnavailable& e) {
                    spdlog::warn("container backend unavailable, using simulated templates: {}", e.what());
                }
            }
            auto r = eval_template(engine, request.input, Deadline(request.timeout));
            out.ok = r.ok;
            out.output = r.ok ? r.rendered : r.error;
            return out;
        }
        case ExecKind::xml: {
            auto r = xml(request.input, std::nullopt);
            out.ok = r.ok;
            out.output = r.ok ? r.text : r.error;
            return out;
        }
        case ExecKind::sql: {
            auto r = sql(request.input);
            out.ok = r.ok;
            out.output = std::move(r.rendered);
            out.truncated = r.truncated;
            return out;
        }
        case ExecKind::php_subset: {
            auto r = php(request.input, request.timeout);
            out.ok = r.ok;
            out.output = r.ok ? r.output : r.error;
            out.truncated = r.truncated;
            return out;
        }
    }
    return out;
}

}  // namespace webtrap::sandbox
