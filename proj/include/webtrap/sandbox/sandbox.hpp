#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "webtrap/sandbox/container.hpp"
#include "webtrap/sandbox/limits.hpp"
#include "webtrap/sandbox/php_subset.hpp"
#include "webtrap/sandbox/shell.hpp"
#include "webtrap/sandbox/sql.hpp"
#include "webtrap/sandbox/template_eval.hpp"
#include "webtrap/sandbox/vfs.hpp"
#include "webtrap/sandbox/xml_resolver.hpp"

namespace webtrap::sandbox {

enum class Backend { simulated, container };
enum class ExecKind { shell, template_eval, xml, sql, php_subset };

std::string_view to_string(Backend backend);
std::optional<Backend> parse_backend(std::string_view text);

struct ExecutionRequest {
    ExecKind kind = ExecKind::shell;
    std::string input;
    std::chrono::milliseconds timeout = kDefaultTimeout;
    std::optional<Backend> backend;  // unset: the sandbox default
};

struct ExecutionResult {
    bool ok = false;
    std::string output;
    bool truncated = false;
    Backend backend = Backend::simulated;  // backend that produced output
};

struct SandboxConfig {
    Backend backend = Backend::simulated;
    std::uint32_t seed = DummyDatabase::kDefaultSeed;
    ContainerOptions container;
    HttpGetter http_get;  // unset: default_http_getter()
};

class Sandbox {
public:
    explicit Sandbox(SandboxConfig config = {});

    ExecutionResult execute(const ExecutionRequest& request);

    ShellResult shell(std::string_view command_line, std::chrono::milliseconds timeout = kDefaultTimeout);
    TemplateOutcome render_template(TemplateEngine engine, std::string_view payload,
                                    std::chrono::milliseconds timeout = kDefaultTimeout);
    XmlOutcome xml(std::string_view document, const std::optional<std::string>& collector);
    SqlOutcome sql(std::string_view query) const;
    PhpRunResult php(std::string_view code, std::chrono::milliseconds timeout = kDefaultTimeout);
    PhpRunResult php_source(std::string_view source, std::chrono::milliseconds timeout = kDefaultTimeout);

    const VirtualFilesystem& vfs() const { return vfs_; }
    const DummyDatabase& database() const { return db_; }
    const SandboxConfig& config() const { return config_; }
    // Null unless the container backend is configured.
    ContainerBackend* container() { return container_.get(); }

private:
    PhpHost php_host(const Deadline& deadline);

    SandboxConfig config_;
    const VirtualFilesystem& vfs_;
    DummyDatabase db_;
    std::unique_ptr<ContainerBackend> container_;
};

}  // namespace webtrap::sandbox
