#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "webtrap/sandbox/sandbox.hpp"

namespace webtrap::emulators {

// Which part of the request an injectable value came from.
enum class Source { get, post, cookie };

std::string_view to_string(Source source);

struct AttackFinding {
    std::string name;
    int order = 0;
    bool operator==(const AttackFinding&) const = default;
};

// Priority of an attack name; -1 for names outside the table.
int attack_order(std::string_view name);

struct EmulationResult {
    std::string name;
    int order = 0;
    std::string value;
    bool page = true;  // weave value into the injectable page
    // Side observations for the session log (OOB exchanges, RFI URLs, ...).
    std::vector<std::string> notes;
};

struct EmulationContext {
    sandbox::Sandbox* sandbox = nullptr;
    bool xxe_oob_enabled = false;
    std::string xxe_collector = "127.0.0.1:8091";
    bool rfi_fetch_enabled = false;
    sandbox::HttpGetter rfi_getter;  // unset: default_http_getter()
    // `{payload}` marks the injection point.
    std::string sqli_template = "SELECT * FROM users WHERE username='{payload}'";
};

class Emulator {
public:
    virtual ~Emulator() = default;

    virtual std::string_view name() const = 0;
    virtual bool accepts(Source source) const { return source != Source::cookie; }
    virtual bool scan(std::string_view payload) const = 0;
    virtual EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const = 0;

    int order() const { return attack_order(name()); }
};

// All emulators in registration order, which is also the tie-break order:
// sqli, template_injection, xxe_injection, php_object_injection,
// php_code_injection, cmd_exec, rfi, lfi, xss.
const std::vector<std::unique_ptr<Emulator>>& registry();
const Emulator* find_emulator(std::string_view name);

struct InjectableValue {
    Source source = Source::get;
    std::string key;    // parameter or cookie name, "" for the path
    std::string value;  // decoded once
};

struct Candidate {
    AttackFinding finding;
    std::size_t emulator_index = 0;
    std::size_t value_index = 0;
};

// Every (emulator, value) pair that matches, honoring class permissions.
std::vector<Candidate> scan_all(const std::vector<InjectableValue>& values);

// The highest-order candidate; ties go to the earlier emulator, then the
// earlier value.
std::optional<Candidate> select_winner(const std::vector<Candidate>& candidates);

// Scans all values and emulates the winner. Without a finding the result is
// "index" (order 1) when known_page, else "unknown" (order 0).
EmulationResult base_handle(const std::vector<InjectableValue>& values, bool known_page, const EmulationContext& ctx);

// Text of a payload after its first shell metacharacter; the inner text
// for `...` and $(...).
std::string extract_shell_fragment(std::string_view payload);

}  // namespace webtrap::emulators
