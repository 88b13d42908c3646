#include "webtrap/sandbox/php_subset.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "webtrap/sandbox/php_value.hpp"
#include "webtrap/util/codec.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::sandbox {

namespace {

constexpr std::string_view kPhpVersion = "7.4.3";

struct PhpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutputFull {};

enum class Tok { end, variable, ident, number, single_str, double_str, backtick, op };

struct Token {
    Tok kind = Tok::end;
    std::string text;
    std::size_t pos = 0;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto fail = [&](std::size_t at) {
        throw PhpError("PHP Parse error: syntax error, unexpected '" + std::string(s.substr(at, 1)) + "'");
    };
    while (i < s.size()) {
        char c = s[i];
        if (util::is_space(c)) {
            ++i;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < s.size() && s[i + 1] == '/')) {
            while (i < s.size() && s[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            auto end = s.find("*/", i + 2);
            i = end == std::string_view::npos ? s.size() : end + 2;
            continue;
        }
        std::size_t start = i;
        if (c == '$') {
            ++i;
            while (i < s.size() && util::is_word_char(s[i])) ++i;
            if (i == start + 1) fail(start);
            out.push_back({Tok::variable, std::string(s.substr(start + 1, i - start - 1)), start});
            continue;
        }
        if (util::is_word_char(c) && !(c >= '0' && c <= '9')) {
            while (i < s.size() && (util::is_word_char(s[i]) || s[i] == '\\')) ++i;
            out.push_back({Tok::ident, std::string(s.substr(start, i - start)), start});
            continue;
        }
        if (c >= '0' && c <= '9') {
            while (i < s.size() && ((s[i] >= '0' && s[i] <= '9') || s[i] == '.')) ++i;
            out.push_back({Tok::number, std::string(s.substr(start, i - start)), start});
            continue;
        }
        if (c == '\'' || c == '"' || c == '`') {
            ++i;
            std::string body;
            bool closed = false;
            while (i < s.size()) {
                char d = s[i];
                if (d == c) {
                    closed = true;
                    ++i;
                    break;
                }
                if (d == '\\' && i + 1 < s.size()) {
                    // keep escapes raw; they are decoded per quote style
                    body.push_back(d);
                    body.push_back(s[i + 1]);
                    i += 2;
                    continue;
                }
                body.push_back(d);
                ++i;
            }
            if (!closed) throw PhpError("PHP Parse error: syntax error, unexpected end of file");
            Tok kind = c == '\'' ? Tok::single_str : c == '"' ? Tok::double_str : Tok::backtick;
            out.push_back({kind, std::move(body), start});
            continue;
        }
        static constexpr std::string_view kOps[] = {"===", "!==", ".=", "+=", "-=", "==", "!=", "<>", "<=",
                                                    ">=",  "&&",  "||", "=",  ".",  "+",  "-",  "*",  "/",
                                                    "%",   "(",   ")",  ",",  ";",  "!",  "<",  ">"};
        bool matched = false;
        for (auto op : kOps) {
            if (s.substr(i, op.size()) == op) {
                out.push_back({Tok::op, std::string(op), start});
                i += op.size();
                matched = true;
                break;
            }
        }
        if (!matched) fail(start);
    }
    out.push_back({Tok::end, "", s.size()});
    return out;
}

bool is_numeric_string(std::string_view s, double& value) {
    s = util::trim(s);
    if (s.empty()) return false;
    std::string_view body = s;
    if (body.front() == '+') body.remove_prefix(1);
    auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    return ec == std::errc{} && p == body.data() + body.size();
}

double to_number(const PhpScalar& v) {
    if (std::holds_alternative<std::monostate>(v)) return 0;
    if (auto b = std::get_if<bool>(&v)) return *b ? 1 : 0;
    if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto d = std::get_if<double>(&v)) return *d;
    const auto& s = std::get<std::string>(v);
    // leading numeric prefix, as PHP does with a warning
    std::size_t n = 0;
    while (n < s.size() && util::is_space(s[n])) ++n;
    std::size_t start = n;
    if (n < s.size() && (s[n] == '-' || s[n] == '+')) ++n;
    while (n < s.size() && ((s[n] >= '0' && s[n] <= '9') || s[n] == '.')) ++n;
    double out = 0;
    std::string_view digits(s.data() + start, n - start);
    if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
    std::from_chars(digits.data(), digits.data() + digits.size(), out);
    return out;
}

bool is_integral(const PhpScalar& v) {
    if (std::holds_alternative<double>(v)) return false;
    if (auto s = std::get_if<std::string>(&v)) {
        double d;
        if (!is_numeric_string(*s, d)) {
            return s->find('.') == std::string::npos && s->find('e') == std::string::npos &&
                   s->find('E') == std::string::npos;
        }
        return d == std::floor(d) && s->find_first_of(".eE") == std::string::npos;
    }
    return true;
}

bool truthy(const PhpScalar& v) {
    if (std::holds_alternative<std::monostate>(v)) return false;
    if (auto b = std::get_if<bool>(&v)) return *b;
    if (auto i = std::get_if<std::int64_t>(&v)) return *i != 0;
    if (auto d = std::get_if<double>(&v)) return *d != 0.0;
    const auto& s = std::get<std::string>(v);
    return !(s.empty() || s == "0");
}

PhpScalar number_result(double d, bool integral) {
    if (integral && std::isfinite(d) && std::fabs(d) < 9.2e18) return static_cast<std::int64_t>(d);
    return d;
}

bool loose_equal(const PhpScalar& a, const PhpScalar& b) {
    auto as = std::get_if<std::string>(&a);
    auto bs = std::get_if<std::string>(&b);
    if (as && bs) {
        double x, y;
        if (is_numeric_string(*as, x) && is_numeric_string(*bs, y)) return x == y;
        return *as == *bs;
    }
    if (std::holds_alternative<bool>(a) || std::holds_alternative<bool>(b) ||
        std::holds_alternative<std::monostate>(a) || std::holds_alternative<std::monostate>(b)) {
        return truthy(a) == truthy(b);
    }
    if (as || bs) {
        const std::string& s = as ? *as : *bs;
        double d;
        if (!is_numeric_string(s, d)) return php_to_string(a) == php_to_string(b);
    }
    return to_number(a) == to_number(b);
}

class Interpreter {
public:
    Interpreter(const PhpHost& host, const Deadline& deadline, PhpRunResult& result)
        : host_(host), deadline_(deadline), result_(result) {}

    void run(std::string_view code) {
        toks_ = lex(code);
        pos_ = 0;
        while (peek().kind != Tok::end) {
            if (deadline_.expired()) {
                result_.truncated = true;
                return;
            }
            statement();
        }
    }

    void emit(std::string_view text) {
        std::size_t room = kOutputLimit - std::min(kOutputLimit, result_.output.size());
        if (text.size() > room) {
            result_.output.append(text.substr(0, room));
            result_.truncated = true;
            throw OutputFull{};
        }
        result_.output.append(text);
    }

private:
    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    bool is_op(std::string_view op, std::size_t ahead = 0) const {
        return peek(ahead).kind == Tok::op && peek(ahead).text == op;
    }
    bool accept(std::string_view op) {
        if (is_op(op)) {
            ++pos_;
            return true;
        }
        return false;
    }
    [[noreturn]] void unexpected() const {
        const auto& t = peek();
        if (t.kind == Tok::end) throw PhpError("PHP Parse error: syntax error, unexpected end of file");
        throw PhpError("PHP Parse error: syntax error, unexpected '" + t.text + "'");
    }
    void expect(std::string_view op) {
        if (!accept(op)) unexpected();
    }
    void end_statement() {
        if (peek().kind == Tok::end) return;
        expect(";");
    }

    void statement() {
        if (accept(";")) return;
        const auto& t = peek();
        if (t.kind == Tok::ident && (util::iequals(t.text, "echo") || util::iequals(t.text, "print"))) {
            bool is_echo = util::iequals(t.text, "echo");
            ++pos_;
            emit(php_to_string(expression()));
            while (is_echo && accept(",")) emit(php_to_string(expression()));
            end_statement();
            return;
        }
        if (t.kind == Tok::variable && peek(1).kind == Tok::op &&
            (peek(1).text == "=" || peek(1).text == ".=" || peek(1).text == "+=" || peek(1).text == "-=")) {
            std::string name = t.text;
            std::string op = peek(1).text;
            pos_ += 2;
            PhpScalar rhs = expression();
            PhpScalar& slot = result_.variables[name];
            if (op == "=") {
                slot = std::move(rhs);
            } else if (op == ".=") {
                slot = php_to_string(slot) + php_to_string(rhs);
            } else {
                double d = op == "+=" ? to_number(slot) + to_number(rhs) : to_number(slot) - to_number(rhs);
                slot = number_result(d, is_integral(slot) && is_integral(rhs));
            }
            end_statement();
            return;
        }
        expression();
        end_statement();
    }

    PhpScalar expression() { return logical_or(); }

    PhpScalar logical_or() {
        PhpScalar left = logical_and();
        while (accept("||")) {
            PhpScalar right = logical_and();
            left = truthy(left) || truthy(right);
        }
        return left;
    }

    PhpScalar logical_and() {
        PhpScalar left = comparison();
        while (accept("&&")) {
            PhpScalar right = comparison();
            left = truthy(left) && truthy(right);
        }
        return left;
    }

    PhpScalar comparison() {
        PhpScalar left = concat();
        for (;;) {
            std::string op;
            for (auto candidate : {"===", "!==", "==", "!=", "<>", "<=", ">=", "<", ">"}) {
                if (is_op(candidate)) {
                    op = candidate;
                    break;
                }
            }
            if (op.empty()) return left;
            ++pos_;
            PhpScalar right = concat();
            if (op == "===") left = left.index() == right.index() && left == right;
            else if (op == "!==") left = !(left.index() == right.index() && left == right);
            else if (op == "==") left = loose_equal(left, right);
            else if (op == "!=" || op == "<>") left = !loose_equal(left, right);
            else {
                double a = to_number(left), b = to_number(right);
                if (op == "<") left = a < b;
                else if (op == ">") left = a > b;
                else if (op == "<=") left = a <= b;
                else left = a >= b;
            }
        }
    }

    PhpScalar concat() {
        PhpScalar left = additive();
        while (accept(".")) {
            PhpScalar right = additive();
            std::string joined = php_to_string(left);
            joined += php_to_string(right);
            if (joined.size() > kOutputLimit) {
                joined.resize(kOutputLimit);
                result_.truncated = true;
            }
            left = std::move(joined);
        }
        return left;
    }

    PhpScalar additive() {
        PhpScalar left = multiplicative();
        for (;;) {
            if (accept("+")) {
                PhpScalar r = multiplicative();
                left = number_result(to_number(left) + to_number(r), is_integral(left) && is_integral(r));
            } else if (accept("-")) {
                PhpScalar r = multiplicative();
                left = number_result(to_number(left) - to_number(r), is_integral(left) && is_integral(r));
            } else {
                return left;
            }
        }
    }

    PhpScalar multiplicative() {
        PhpScalar left = unary();
        for (;;) {
            if (accept("*")) {
                PhpScalar r = unary();
                left = number_result(to_number(left) * to_number(r), is_integral(left) && is_integral(r));
            } else if (accept("/")) {
                PhpScalar r = unary();
                double d = to_number(r);
                if (d == 0) throw PhpError("PHP Fatal error:  Uncaught DivisionByZeroError: Division by zero");
                double q = to_number(left) / d;
                left = number_result(q, is_integral(left) && is_integral(r) && q == std::floor(q));
            } else if (accept("%")) {
                PhpScalar r = unary();
                auto d = static_cast<std::int64_t>(to_number(r));
                if (d == 0) throw PhpError("PHP Fatal error:  Uncaught DivisionByZeroError: Modulo by zero");
                left = static_cast<std::int64_t>(to_number(left)) % d;
            } else {
                return left;
            }
        }
    }

    PhpScalar unary() {
        if (accept("!")) return !truthy(unary());
        if (accept("-")) {
            PhpScalar v = unary();
            return number_result(-to_number(v), is_integral(v));
        }
        if (accept("+")) {
            PhpScalar v = unary();
            return number_result(to_number(v), is_integral(v));
        }
        return primary();
    }

    PhpScalar primary() {
        if (++depth_ > 64) throw PhpError("PHP Fatal error:  Maximum nesting level reached");
        struct Guard {
            int& d;
            ~Guard() { --d; }
        } guard{depth_};

        Token t = peek();
        switch (t.kind) {
            case Tok::number: {
                ++pos_;
                double d = 0;
                auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), d);
                if (ec != std::errc{} || p != t.text.data() + t.text.size()) unexpected_at(t);
                if (t.text.find('.') == std::string::npos) {
                    std::int64_t i = 0;
                    auto r = std::from_chars(t.text.data(), t.text.data() + t.text.size(), i);
                    if (r.ec == std::errc{}) return i;
                }
                return d;
            }
            case Tok::single_str:
                ++pos_;
                return decode_single(t.text);
            case Tok::double_str:
                ++pos_;
                return decode_double(t.text);
            case Tok::backtick:
                ++pos_;
                return shell(decode_double(t.text));
            case Tok::variable: {
                ++pos_;
                auto it = result_.variables.find(t.text);
                return it == result_.variables.end() ? PhpScalar{} : it->second;
            }
            case Tok::ident: {
                ++pos_;
                std::string name = util::to_lower(t.text);
                if (name == "true") return true;
                if (name == "false") return false;
                if (name == "null") return PhpScalar{};
                if (name == "php_version") return std::string(kPhpVersion);
                if (name == "php_eol") return std::string("\n");
                if (name == "print") {
                    emit(php_to_string(expression()));
                    return std::int64_t{1};
                }
                if (!is_op("(")) throw PhpError("PHP Fatal error:  Uncaught Error: Undefined constant \"" + t.text + "\"");
                ++pos_;
                std::vector<PhpScalar> args;
                if (!accept(")")) {
                    args.push_back(expression());
                    while (accept(",")) args.push_back(expression());
                    expect(")");
                }
                return call(name, t.text, args);
            }
            case Tok::op:
                if (accept("(")) {
                    PhpScalar v = expression();
                    expect(")");
                    return v;
                }
                break;
            case Tok::end:
                break;
        }
        unexpected();
    }

    [[noreturn]] void unexpected_at(const Token& t) const {
        throw PhpError("PHP Parse error: syntax error, unexpected '" + t.text + "'");
    }

    static std::string decode_single(std::string_view raw) {
        std::string out;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 1 < raw.size() && (raw[i + 1] == '\'' || raw[i + 1] == '\\')) {
                out.push_back(raw[++i]);
            } else {
                out.push_back(raw[i]);
            }
        }
        return out;
    }

    std::string decode_double(std::string_view raw) {
        std::string out;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (c == '\\' && i + 1 < raw.size()) {
                char n = raw[i + 1];
                switch (n) {
                    case 'n': out.push_back('\n'); ++i; continue;
                    case 't': out.push_back('\t'); ++i; continue;
                    case 'r': out.push_back('\r'); ++i; continue;
                    case '\\': case '$': case '"': case '`': out.push_back(n); ++i; continue;
                    default: out.push_back(c); continue;
                }
            }
            if (c == '$' && i + 1 < raw.size() && (util::is_word_char(raw[i + 1]) && !(raw[i + 1] >= '0' && raw[i + 1] <= '9'))) {
                std::size_t j = i + 1;
                while (j < raw.size() && util::is_word_char(raw[j])) ++j;
                std::string name(raw.substr(i + 1, j - i - 1));
                auto it = result_.variables.find(name);
                if (it != result_.variables.end()) out += php_to_string(it->second);
                i = j - 1;
                continue;
            }
            out.push_back(c);
        }
        return out;
    }

    std::string shell(const std::string& cmd) {
        if (!host_.shell) return {};
        return host_.shell(cmd);
    }

    static std::string last_line(std::string_view out) {
        while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.remove_suffix(1);
        auto nl = out.rfind('\n');
        return std::string(nl == std::string_view::npos ? out : out.substr(nl + 1));
    }

    PhpScalar call(const std::string& name, const std::string& spelled, const std::vector<PhpScalar>& args) {
        auto arg = [&](std::size_t i) -> std::string {
            if (i >= args.size()) {
                throw PhpError("PHP Fatal error:  Uncaught ArgumentCountError: Too few arguments to function " +
                               spelled + "()");
            }
            return php_to_string(args[i]);
        };
        if (name == "system") {
            std::string out = shell(arg(0));
            emit(out);
            return last_line(out);
        }
        if (name == "passthru") {
            emit(shell(arg(0)));
            return PhpScalar{};
        }
        if (name == "exec") return last_line(shell(arg(0)));
        if (name == "shell_exec") return shell(arg(0));
        if (name == "phpversion") return std::string(kPhpVersion);
        if (name == "strlen") return static_cast<std::int64_t>(arg(0).size());
        if (name == "strtoupper" || name == "strtolower") {
            std::string s = arg(0);
            for (auto& c : s) {
                if (name == "strtoupper" && c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
                if (name == "strtolower" && c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
            }
            return s;
        }
        if (name == "strrev") {
            std::string s = arg(0);
            return std::string(s.rbegin(), s.rend());
        }
        if (name == "str_repeat") {
            std::string s = arg(0);
            auto n = static_cast<std::int64_t>(to_number(args.size() > 1 ? args[1] : PhpScalar{}));
            std::string out;
            for (std::int64_t i = 0; i < n && out.size() < kOutputLimit; ++i) out += s;
            if (out.size() > kOutputLimit) {
                out.resize(kOutputLimit);
                result_.truncated = true;
            }
            return out;
        }
        if (name == "base64_encode") return util::base64_encode(arg(0));
        if (name == "base64_decode") {
            auto d = util::base64_decode(arg(0));
            if (!d) return false;
            return *d;
        }
        if (name == "md5") return util::md5_hex(arg(0));
        if (name == "file_get_contents") {
            std::optional<std::string> content;
            if (host_.read_file) content = host_.read_file(arg(0));
            if (!content) return false;
            return *content;
        }
        if (name == "phpinfo") {
            emit("phpinfo()\nPHP Version => " + std::string(kPhpVersion) +
                 "\n\nSystem => Linux web-prod-02 4.15.0-112-generic #113-Ubuntu SMP x86_64\n"
                 "Server API => Apache 2.0 Handler\n");
            return true;
        }
        throw PhpError("PHP Fatal error:  Uncaught Error: Call to undefined function " + spelled + "()");
    }

    const PhpHost& host_;
    const Deadline& deadline_;
    PhpRunResult& result_;
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

}  // namespace

std::string php_to_string(const PhpScalar& value) {
    if (std::holds_alternative<std::monostate>(value)) return {};
    if (auto b = std::get_if<bool>(&value)) return *b ? "1" : "";
    if (auto i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
    if (auto d = std::get_if<double>(&value)) return php_float_repr(*d);
    return std::get<std::string>(value);
}

PhpRunResult run_php_code(std::string_view code, const PhpHost& host, const Deadline& deadline) {
    PhpRunResult result;
    Interpreter interp(host, deadline, result);
    try {
        interp.run(code);
        result.ok = true;
    } catch (const OutputFull&) {
        result.ok = true;
    } catch (const PhpError& e) {
        result.error = e.what();
    }
    return result;
}

PhpRunResult run_php_source(std::string_view source, const PhpHost& host, const Deadline& deadline) {
    PhpRunResult result;
    Interpreter interp(host, deadline, result);
    try {
        std::size_t i = 0;
        while (i < source.size()) {
            auto open = source.find("<?", i);
            if (open == std::string_view::npos) {
                interp.emit(source.substr(i));
                break;
            }
            interp.emit(source.substr(i, open - i));
            std::size_t body = open + 2;
            bool short_echo = false;
            if (util::istarts_with(source.substr(body), "php")) body += 3;
            else if (source.substr(body, 1) == "=") {
                short_echo = true;
                body += 1;
            }
            auto close = source.find("?>", body);
            std::string code(source.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
            if (short_echo) code = "echo " + code + ";";
            interp.run(code);
            if (close == std::string_view::npos) break;
            i = close + 2;
            if (i < source.size() && source[i] == '\n') ++i;
        }
        result.ok = true;
    } catch (const OutputFull&) {
        result.ok = true;
    } catch (const PhpError& e) {
        result.error = e.what();
    }
    return result;
}

}  // namespace webtrap::sandbox
