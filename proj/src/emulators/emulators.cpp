#include "webtrap/emulators/emulator.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <cctype>
#include <stdexcept>

#include "webtrap/emulators/scanners.hpp"
#include "webtrap/sandbox/php_value.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::emulators {

namespace {

constexpr std::array<std::pair<std::string_view, int>, 11> kOrders = {{
    {"unknown", 0},
    {"index", 1},
    {"xss", 2},
    {"lfi", 2},
    {"rfi", 2},
    {"sqli", 3},
    {"template_injection", 3},
    {"xxe_injection", 3},
    {"php_object_injection", 3},
    {"php_code_injection", 3},
    {"cmd_exec", 4},
}};

constexpr std::size_t kRfiBodyLimit = 64 * 1024;

sandbox::Sandbox& box(const EmulationContext& ctx) {
    if (!ctx.sandbox) throw std::logic_error("emulation context has no sandbox");
    return *ctx.sandbox;
}

EmulationResult result_for(std::string_view name, std::string value, bool page = true) {
    return {std::string(name), attack_order(name), std::move(value), page, {}};
}

class SqliEmulator : public Emulator {
public:
    std::string_view name() const override { return "sqli"; }
    bool accepts(Source) const override { return true; }
    bool scan(std::string_view p) const override { return scan_sqli(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        std::string query = ctx.sqli_template;
        std::string marker = "{payload}";
        for (auto at = query.find(marker); at != std::string::npos; at = query.find(marker, at + payload.size())) {
            query.replace(at, marker.size(), payload);
        }
        auto out = box(ctx).sql(query);
        auto r = result_for(name(), std::move(out.rendered));
        if (out.truncated) r.notes.push_back("sqli: result truncated");
        return r;
    }
};

class TemplateEmulator : public Emulator {
public:
    std::string_view name() const override { return "template_injection"; }
    bool scan(std::string_view p) const override { return scan_template(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        auto engine = sandbox::detect_template_engine(payload);
        if (!engine) return result_for(name(), "");
        auto out = box(ctx).render_template(*engine, payload);
        auto r = result_for(name(), out.ok ? out.rendered : "");
        r.notes.push_back(std::string("template engine: ") + std::string(sandbox::to_string(*engine)));
        if (!out.ok) r.notes.push_back("template error: " + out.error);
        return r;
    }
};

class XxeEmulator : public Emulator {
public:
    std::string_view name() const override { return "xxe_injection"; }
    bool scan(std::string_view p) const override { return scan_xxe(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        std::optional<std::string> collector;
        if (ctx.xxe_oob_enabled) collector = ctx.xxe_collector;
        auto out = box(ctx).xml(payload, collector);
        auto r = result_for(name(), out.ok ? out.text : out.error);
        for (const auto& ex : out.exchanges) {
            if (ex.requested_url.empty()) {
                r.notes.push_back("xxe: remote entity " + ex.original_uri + " not fetched (oob disabled)");
            } else {
                r.notes.push_back("xxe-oob: " + ex.original_uri + " -> " + ex.requested_url +
                                  (ex.delivered ? " delivered " + std::to_string(ex.response_body.size()) + " bytes"
                                                : " failed"));
            }
        }
        return r;
    }
};

class PhpObjectEmulator : public Emulator {
public:
    std::string_view name() const override { return "php_object_injection"; }
    bool accepts(Source) const override { return true; }
    bool scan(std::string_view p) const override { return scan_php_object(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext&) const override {
        sandbox::PhpValue value;
        try {
            value = sandbox::unserialize_php(payload);
        } catch (const sandbox::PhpParseError&) {
            return result_for("unknown", "");
        }
        auto r = result_for(name(), sandbox::var_dump(value));
        auto classes = sandbox::object_classes(value);
        for (const auto& cls : classes) r.notes.push_back("php: " + cls + "::__wakeup() invoked");
        for (auto it = classes.rbegin(); it != classes.rend(); ++it) {
            r.notes.push_back("php: " + *it + "::__destruct() invoked");
        }
        return r;
    }
};

class PhpCodeEmulator : public Emulator {
public:
    std::string_view name() const override { return "php_code_injection"; }
    bool scan(std::string_view p) const override { return scan_php_code(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        auto out = box(ctx).php("$a = " + std::string(payload) + ";");
        if (!out.ok) {
            auto r = result_for(name(), "");
            r.notes.push_back("php: " + out.error);
            return r;
        }
        std::string value = out.output;
        if (value.empty()) {
            auto it = out.variables.find("a");
            if (it != out.variables.end()) value = sandbox::php_to_string(it->second);
        }
        return result_for(name(), std::move(value));
    }
};

class CmdExecEmulator : public Emulator {
public:
    std::string_view name() const override { return "cmd_exec"; }
    bool scan(std::string_view p) const override { return scan_cmd_exec(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        auto fragment = extract_shell_fragment(payload);
        auto out = box(ctx).shell(fragment);
        auto r = result_for(name(), std::move(out.output));
        if (out.truncated) r.notes.push_back("cmd_exec: output truncated (timeout or size limit)");
        return r;
    }
};

class RfiEmulator : public Emulator {
public:
    std::string_view name() const override { return "rfi"; }
    bool scan(std::string_view p) const override { return scan_rfi(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        std::string url = extract_url(payload);
        if (ctx.rfi_fetch_enabled) {
            auto getter = ctx.rfi_getter ? ctx.rfi_getter : sandbox::default_http_getter();
            if (auto body = getter(url)) {
                if (body->size() > kRfiBodyLimit) body->resize(kRfiBodyLimit);
                auto out = box(ctx).php_source(*body);
                auto r = result_for(name(), out.ok ? out.output : "");
                r.notes.push_back("rfi: included " + url + " (" + std::to_string(body->size()) + " bytes)");
                return r;
            }
        }
        auto r = result_for(name(), inclusion_banner(url));
        r.notes.push_back("rfi: " + url);
        return r;
    }

private:
    static std::string extract_url(std::string_view payload) {
        auto sep = payload.find("://");
        if (sep == std::string_view::npos) return std::string(util::trim(payload));
        std::size_t start = sep;
        while (start > 0 && std::isalpha(static_cast<unsigned char>(payload[start - 1]))) --start;
        std::size_t end = sep;
        while (end < payload.size() && !util::is_space(payload[end])) ++end;
        return std::string(payload.substr(start, end - start));
    }

    static std::string inclusion_banner(const std::string& url) {
        return "<br />\n<b>Warning</b>:  include(" + url +
               "): failed to open stream: HTTP request failed! in <b>/var/www/html/index.php</b> on line <b>7</b><br />\n";
    }
};

class LfiEmulator : public Emulator {
public:
    std::string_view name() const override { return "lfi"; }
    bool scan(std::string_view p) const override { return scan_lfi(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext& ctx) const override {
        // everything after a NUL byte is dropped, as old PHP did
        auto target = payload.substr(0, payload.find('\0'));
        std::optional<std::string> content;
        const auto& vfs = box(ctx).vfs();
        if (util::istarts_with(target, "file://") || util::istarts_with(target, "php://")) {
            content = sandbox::read_stream(target, vfs, "/");
        } else {
            content = vfs.read_file(sandbox::VirtualFilesystem::normalize(target, "/"));
        }
        if (!content || content->empty()) return result_for(name(), "", true);
        return result_for(name(), std::move(*content), false);
    }
};

class XssEmulator : public Emulator {
public:
    std::string_view name() const override { return "xss"; }
    bool scan(std::string_view p) const override { return scan_xss(p); }
    EmulationResult emulate(std::string_view payload, const EmulationContext&) const override {
        return result_for(name(), std::string(payload), true);
    }
};

}  // namespace

std::string_view to_string(Source source) {
    switch (source) {
        case Source::get: return "GET";
        case Source::post: return "POST";
        case Source::cookie: return "COOKIE";
    }
    return "GET";
}

int attack_order(std::string_view name) {
    for (auto [n, o] : kOrders) {
        if (n == name) return o;
    }
    return -1;
}

const std::vector<std::unique_ptr<Emulator>>& registry() {
    static const auto emulators = [] {
        std::vector<std::unique_ptr<Emulator>> v;
        v.push_back(std::make_unique<SqliEmulator>());
        v.push_back(std::make_unique<TemplateEmulator>());
        v.push_back(std::make_unique<XxeEmulator>());
        v.push_back(std::make_unique<PhpObjectEmulator>());
        v.push_back(std::make_unique<PhpCodeEmulator>());
        v.push_back(std::make_unique<CmdExecEmulator>());
        v.push_back(std::make_unique<RfiEmulator>());
        v.push_back(std::make_unique<LfiEmulator>());
        v.push_back(std::make_unique<XssEmulator>());
        return v;
    }();
    return emulators;
}

const Emulator* find_emulator(std::string_view name) {
    for (const auto& e : registry()) {
        if (e->name() == name) return e.get();
    }
    return nullptr;
}

std::vector<Candidate> scan_all(const std::vector<InjectableValue>& values) {
    std::vector<Candidate> out;
    const auto& emus = registry();
    for (std::size_t e = 0; e < emus.size(); ++e) {
        for (std::size_t v = 0; v < values.size(); ++v) {
            if (values[v].value.empty() || !emus[e]->accepts(values[v].source)) continue;
            if (emus[e]->scan(values[v].value)) {
                out.push_back({{std::string(emus[e]->name()), emus[e]->order()}, e, v});
            }
        }
    }
    return out;
}

std::optional<Candidate> select_winner(const std::vector<Candidate>& candidates) {
    std::optional<Candidate> best;
    for (const auto& c : candidates) {
        if (!best || c.finding.order > best->finding.order ||
            (c.finding.order == best->finding.order &&
             (c.emulator_index < best->emulator_index ||
              (c.emulator_index == best->emulator_index && c.value_index < best->value_index)))) {
            best = c;
        }
    }
    return best;
}

EmulationResult base_handle(const std::vector<InjectableValue>& values, bool known_page, const EmulationContext& ctx) {
    auto winner = select_winner(scan_all(values));
    if (!winner) return known_page ? result_for("index", "") : result_for("unknown", "");
    const auto& emu = *registry()[winner->emulator_index];
    const auto& payload = values[winner->value_index].value;
    try {
        return emu.emulate(payload, ctx);
    } catch (const std::exception& e) {
        spdlog::error("{} emulation failed: {}", emu.name(), e.what());
        auto r = result_for(emu.name(), "");
        r.notes.push_back(std::string("emulation failed: ") + e.what());
        return r;
    }
}

std::string extract_shell_fragment(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '`') {
            auto close = s.find('`', i + 1);
            return std::string(s.substr(i + 1, close == std::string_view::npos ? std::string_view::npos : close - i - 1));
        }
        if (c == '$' && i + 1 < s.size() && s[i + 1] == '(') {
            int depth = 1;
            std::size_t j = i + 2;
            for (; j < s.size(); ++j) {
                if (s[j] == '(') ++depth;
                if (s[j] == ')' && --depth == 0) break;
            }
            return std::string(s.substr(i + 2, j - i - 2));
        }
        if (c == ';' || c == '\n') return std::string(s.substr(i + 1));
        if (c == '|') return std::string(s.substr(i + (i + 1 < s.size() && s[i + 1] == '|' ? 2 : 1)));
        if (c == '&' && i + 1 < s.size() && s[i + 1] == '&') return std::string(s.substr(i + 2));
    }
    return std::string(s);
}

}  // namespace webtrap::emulators
