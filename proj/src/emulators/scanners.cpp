#include "webtrap/emulators/scanners.hpp"

#include <array>

#include "webtrap/sandbox/php_value.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::emulators {

using util::ifind;
using util::is_space;
using util::is_word_char;

namespace {

constexpr auto npos = std::string_view::npos;

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool boundary_before(std::string_view s, std::size_t i) { return i == 0 || !is_word_char(s[i - 1]); }

// `word` occurs at s[i] as a whole word.
bool word_at(std::string_view s, std::size_t i, std::string_view word) {
    if (i > s.size() || !boundary_before(s, i)) return false;
    if (!util::istarts_with(s.substr(i), word)) return false;
    std::size_t end = i + word.size();
    return end >= s.size() || !is_word_char(s[end]);
}

std::size_t skip_spaces(std::string_view s, std::size_t i) {
    while (i < s.size() && is_space(s[i])) ++i;
    return i;
}

bool tag_has_script_token(std::string_view tag) {
    for (std::string_view token : {"script", "javascript:", "vbscript:", "iframe", "svg"}) {
        if (util::icontains(tag, token)) return true;
    }
    // \bon[a-z]+\s*=
    for (std::size_t i = 0; i + 2 < tag.size(); ++i) {
        if (!boundary_before(tag, i) || !util::istarts_with(tag.substr(i), "on")) continue;
        std::size_t j = i + 2;
        while (j < tag.size() && is_alpha(tag[j])) ++j;
        if (j == i + 2) continue;
        j = skip_spaces(tag, j);
        if (j < tag.size() && tag[j] == '=') return true;
    }
    return false;
}

}  // namespace

bool scan_xss(std::string_view s) {
    for (std::size_t i = s.find('<'); i != npos; i = s.find('<', i + 1)) {
        auto close = s.find('>', i + 1);
        if (close == npos) return false;
        if (close > i + 1 && tag_has_script_token(s.substr(i + 1, close - i - 1))) return true;
    }
    return false;
}

bool scan_lfi(std::string_view s) {
    if (s.find("../") != npos) return true;
    if (util::istarts_with(s, "file://") || util::istarts_with(s, "php://filter")) return true;
    if (s.empty() || s[0] != '/') return false;
    for (std::string_view dir : {"etc/", "proc/", "var/", "home/", "usr/"}) {
        if (util::istarts_with(s.substr(1), dir)) return true;
    }
    return false;
}

bool scan_rfi(std::string_view s) {
    for (std::size_t i = s.find("://"); i != npos; i = s.find("://", i + 1)) {
        bool scheme_ok = false;
        for (std::string_view scheme : {"https", "http", "ftps", "ftp"}) {
            if (i >= scheme.size() && util::iequals(s.substr(i - scheme.size(), scheme.size()), scheme)) {
                scheme_ok = true;
            }
        }
        if (!scheme_ok) continue;
        std::size_t rest = i + 3;
        std::size_t end = rest;
        while (end < s.size() && !is_space(s[end])) ++end;
        // \S+ needs at least one character before the extension dot
        for (std::size_t dot = rest + 1; dot < end; ++dot) {
            if (s[dot] != '.') continue;
            for (std::string_view ext : {"php", "txt"}) {
                std::size_t after = dot + 1 + ext.size();
                if (after <= end && util::iequals(s.substr(dot + 1, ext.size()), ext) &&
                    (after == s.size() || !is_word_char(s[after]))) {
                    return true;
                }
            }
        }
    }
    return false;
}

namespace {

// Number, or quoted string that may run to the end of the input (the
// closing quote then comes from the surrounding query).
std::size_t sql_literal(std::string_view s, std::size_t i) {
    if (i >= s.size()) return npos;
    char c = s[i];
    if (c >= '0' && c <= '9') {
        while (i < s.size() && ((s[i] >= '0' && s[i] <= '9') || s[i] == '.')) ++i;
        return i;
    }
    if (c == '\'' || c == '"') {
        auto close = s.find(c, i + 1);
        return close == npos ? s.size() : close + 1;
    }
    return npos;
}

bool sql_tautology(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t after = npos;
        if (word_at(s, i, "or")) after = i + 2;
        else if (word_at(s, i, "and")) after = i + 3;
        if (after == npos) continue;
        std::size_t lhs_end = sql_literal(s, skip_spaces(s, after));
        if (lhs_end == npos) continue;
        std::size_t k = skip_spaces(s, lhs_end);
        if (k < s.size() && s[k] == '=' && sql_literal(s, skip_spaces(s, k + 1)) != npos) return true;
    }
    return false;
}

bool sql_union_select(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!word_at(s, i, "union")) continue;
        std::size_t j = skip_spaces(s, i + 5);
        if (word_at(s, j, "all")) j = skip_spaces(s, j + 3);
        else if (word_at(s, j, "distinct")) j = skip_spaces(s, j + 8);
        if (word_at(s, j, "select")) return true;
    }
    return false;
}

bool sql_comment_terminator(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\'' && s[i] != '"' && s[i] != ')') continue;
        std::size_t j = skip_spaces(s, i + 1);
        if (j < s.size() && s[j] == '#') return true;
        if (j + 1 < s.size() && s[j] == '-' && s[j + 1] == '-') return true;
    }
    return false;
}

}  // namespace

bool scan_sqli(std::string_view s) {
    std::size_t single = 0, dbl = 0;
    for (char c : s) {
        if (c == '\'') ++single;
        if (c == '"') ++dbl;
    }
    if (single % 2 == 1 || dbl % 2 == 1) return true;
    return sql_union_select(s) || sql_tautology(s) || sql_comment_terminator(s);
}

bool scan_template(std::string_view s) {
    auto delimited = [&](std::string_view open, std::string_view close) {
        for (std::size_t i = s.find(open); i != npos; i = s.find(open, i + 1)) {
            std::size_t body = i + open.size();
            std::size_t nl = s.find('\n', body);
            // .+ cannot cross a newline and needs one character
            std::size_t end = s.find(close, body + 1);
            if (end != npos && (nl == npos || end < nl)) return true;
        }
        return false;
    };
    return delimited("{{", "}}") || delimited("<%", "%>") || delimited("${", "}");
}

bool scan_xxe(std::string_view s) {
    auto doctype = ifind(s, "<!doctype");
    if (doctype == npos) return false;
    std::size_t i = doctype + 9;
    while (i < s.size() && s[i] != '>' && s[i] != '[') ++i;
    if (i >= s.size() || s[i] != '[') return false;
    return ifind(s, "<!entity") != npos;
}

bool scan_php_object(std::string_view s) {
    if (s.size() < 2 || s[1] != ':') return false;
    if (std::string_view("OASIBDNoasibdn").find(s[0]) == npos) return false;
    try {
        sandbox::unserialize_php(s);
        return true;
    } catch (const sandbox::PhpParseError&) {
        return false;
    }
}

bool scan_php_code(std::string_view s) {
    for (std::string_view fn : {"eval", "system", "passthru", "exec"}) {
        for (std::size_t i = ifind(s, fn); i != npos; i = ifind(s, fn, i + 1)) {
            std::size_t j = skip_spaces(s, i + fn.size());
            if (j < s.size() && s[j] == '(') return true;
        }
    }
    return false;
}

namespace {

constexpr std::array<std::string_view, 40> kUtilities = {
    "cat",  "echo",  "ls",   "pwd",      "cd",    "id",     "whoami", "uname", "ping",    "head",
    "tail", "wget",  "curl", "nc",       "netcat", "bash",  "sh",     "rm",    "ps",      "netstat",
    "ifconfig", "sleep", "python", "perl", "chmod", "touch", "find",  "grep",  "nslookup", "which",
    "hostname", "env", "kill", "mkdir",  "cp",    "mv",     "tftp",   "busybox", "awk",   "base64"};

bool utility_word_at(std::string_view s, std::size_t i) {
    for (auto name : kUtilities) {
        if (word_at(s, i, name)) return true;
    }
    return false;
}

bool utility_at(std::string_view s, std::size_t i) {
    i = skip_spaces(s, i);
    if (utility_word_at(s, i)) return true;
    // /bin/cat, /usr/bin/id
    if (i >= s.size() || s[i] != '/') return false;
    std::size_t end = i;
    while (end < s.size() && (s[end] == '/' || is_word_char(s[end]) || s[end] == '.')) ++end;
    auto slash = s.rfind('/', end - 1);
    return slash != npos && slash >= i && utility_word_at(s, slash + 1);
}

}  // namespace

bool scan_cmd_exec(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        std::size_t after = npos;
        if (c == ';' || c == '|' || c == '`' || c == '\n') after = i + 1;
        else if (c == '&' && i + 1 < s.size() && s[i + 1] == '&') after = i + 2;
        else if (c == '$' && i + 1 < s.size() && s[i + 1] == '(') after = i + 2;
        if (after == npos) continue;
        if (c == '|' && after < s.size() && s[after] == '|') ++after;
        if (utility_at(s, after)) return true;
    }
    return false;
}

}  // namespace webtrap::emulators
