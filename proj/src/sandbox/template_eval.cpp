#include "webtrap/sandbox/template_eval.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <variant>

#include "webtrap/util/strings.hpp"

namespace webtrap::sandbox {

namespace {

struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoneValue {
    bool operator==(const NoneValue&) const = default;
};
using Value = std::variant<NoneValue, bool, std::int64_t, double, std::string>;

std::string to_text(const Value& v) {
    struct {
        std::string operator()(NoneValue) const { return "None"; }
        std::string operator()(bool b) const { return b ? "True" : "False"; }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(double d) const { return python_float_repr(d); }
        std::string operator()(const std::string& s) const { return s; }
    } visitor;
    return std::visit(visitor, v);
}

bool is_number(const Value& v) {
    return std::holds_alternative<bool>(v) || std::holds_alternative<std::int64_t>(v) ||
           std::holds_alternative<double>(v);
}
bool is_int_like(const Value& v) { return std::holds_alternative<bool>(v) || std::holds_alternative<std::int64_t>(v); }

std::int64_t as_int(const Value& v) {
    if (auto b = std::get_if<bool>(&v)) return *b ? 1 : 0;
    return std::get<std::int64_t>(v);
}
double as_double(const Value& v) {
    if (auto d = std::get_if<double>(&v)) return *d;
    return static_cast<double>(as_int(v));
}

bool truthy(const Value& v) {
    if (std::holds_alternative<NoneValue>(v)) return false;
    if (auto s = std::get_if<std::string>(&v)) return !s->empty();
    if (auto d = std::get_if<double>(&v)) return *d != 0.0;
    return as_int(v) != 0;
}

template <typename Op>
std::int64_t checked(Op op, std::int64_t a, std::int64_t b) {
    std::int64_t r = 0;
    if (op(a, b, &r)) throw TemplateError("integer overflow");
    return r;
}
constexpr auto add_ovf = [](std::int64_t a, std::int64_t b, std::int64_t* r) { return __builtin_add_overflow(a, b, r); };
constexpr auto sub_ovf = [](std::int64_t a, std::int64_t b, std::int64_t* r) { return __builtin_sub_overflow(a, b, r); };
constexpr auto mul_ovf = [](std::int64_t a, std::int64_t b, std::int64_t* r) { return __builtin_mul_overflow(a, b, r); };

double floor_mod(double a, double b) {
    double m = std::fmod(a, b);
    if (m != 0 && ((m < 0) != (b < 0))) m += b;
    return m;
}

class ExprParser {
public:
    ExprParser(std::string_view src, std::map<std::string, Value>& vars, const Deadline& deadline)
        : src_(src), vars_(vars), deadline_(deadline) {}

    Value parse_expression_only() {
        Value v = expression();
        skip_ws();
        if (pos_ != src_.size()) throw TemplateError("unexpected input");
        return v;
    }

    // Statements separated by newlines or ';': `name = expr` or a bare expression.
    void run_statements() {
        while (true) {
            skip_ws_and_separators();
            if (pos_ >= src_.size()) return;
            std::size_t save = pos_;
            std::string name = identifier();
            skip_inline_ws();
            if (!name.empty() && peek() == '=' && peek(1) != '=') {
                ++pos_;
                vars_[name] = expression();
            } else {
                pos_ = save;
                expression();
            }
            skip_inline_ws();
            if (pos_ < src_.size() && peek() != '\n' && peek() != ';') throw TemplateError("unsupported statement");
        }
    }

private:
    char peek(std::size_t off = 0) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }

    void skip_ws() {
        while (pos_ < src_.size() && util::is_space(src_[pos_])) ++pos_;
    }
    void skip_inline_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r')) ++pos_;
    }
    void skip_ws_and_separators() {
        while (pos_ < src_.size() && (util::is_space(src_[pos_]) || src_[pos_] == ';')) ++pos_;
    }

    bool accept(std::string_view tok) {
        skip_ws();
        if (src_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    std::string identifier() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < src_.size() && (util::is_word_char(src_[pos_]) && !(src_[pos_] >= '0' && src_[pos_] <= '9'))) {
            while (pos_ < src_.size() && util::is_word_char(src_[pos_])) ++pos_;
        }
        return std::string(src_.substr(start, pos_ - start));
    }

    void tick() {
        if (++steps_ % 64 == 0 && deadline_.expired()) throw TemplateError("timeout");
        if (++depth_guard_ > 200) throw TemplateError("expression too deep");
    }

    Value expression() {
        tick();
        Value left = arith();
        Value result = left;
        bool chained = false;
        while (true) {
            skip_ws();
            std::string_view op;
            for (std::string_view cand : {"==", "!=", "<=", ">=", "<", ">"}) {
                if (src_.substr(pos_, cand.size()) == cand) {
                    op = cand;
                    break;
                }
            }
            if (op.empty()) break;
            pos_ += op.size();
            Value right = arith();
            bool r = compare(left, op, right);
            result = chained ? Value{std::get<bool>(result) && r} : Value{r};
            chained = true;
            left = right;
        }
        --depth_guard_;
        return result;
    }

    static bool compare(const Value& a, std::string_view op, const Value& b) {
        if (op == "==" || op == "!=") {
            bool eq;
            if (is_number(a) && is_number(b)) eq = as_double(a) == as_double(b);
            else eq = a == b;
            return op == "==" ? eq : !eq;
        }
        int c;
        if (is_number(a) && is_number(b)) {
            double x = as_double(a), y = as_double(b);
            c = x < y ? -1 : (x > y ? 1 : 0);
        } else if (std::holds_alternative<std::string>(a) && std::holds_alternative<std::string>(b)) {
            c = std::get<std::string>(a).compare(std::get<std::string>(b));
        } else {
            throw TemplateError("unorderable types");
        }
        if (op == "<") return c < 0;
        if (op == ">") return c > 0;
        if (op == "<=") return c <= 0;
        return c >= 0;
    }

    Value arith() {
        Value v = term();
        while (true) {
            skip_ws();
            char c = peek();
            if (c != '+' && c != '-') break;
            ++pos_;
            Value r = term();
            v = c == '+' ? add(v, r) : sub(v, r);
        }
        return v;
    }

    Value term() {
        Value v = unary();
        while (true) {
            skip_ws();
            std::string_view op;
            if (src_.substr(pos_, 2) == "//") op = "//";
            else if (peek() == '*' && peek(1) != '*') op = "*";
            else if (peek() == '/') op = "/";
            else if (peek() == '%') op = "%";
            if (op.empty()) break;
            pos_ += op.size();
            Value r = unary();
            v = mul_like(v, op, r);
        }
        return v;
    }

    Value unary() {
        tick();
        skip_ws();
        Value v;
        if (peek() == '-') {
            ++pos_;
            Value x = unary();
            if (is_int_like(x)) {
                v = checked(sub_ovf, std::int64_t{0}, as_int(x));
            } else if (std::holds_alternative<double>(x)) {
                v = -std::get<double>(x);
            } else {
                throw TemplateError("bad operand for unary -");
            }
        } else if (peek() == '+') {
            ++pos_;
            v = unary();
            if (!is_number(v)) throw TemplateError("bad operand for unary +");
        } else if (src_.substr(pos_, 3) == "not" && !util::is_word_char(peek(3))) {
            pos_ += 3;
            v = !truthy(unary());
        } else {
            v = power();
        }
        --depth_guard_;
        return v;
    }

    Value power() {
        Value base = primary();
        skip_ws();
        if (src_.substr(pos_, 2) == "**") {
            pos_ += 2;
            Value exp = unary();
            if (!is_number(base) || !is_number(exp)) throw TemplateError("unsupported operand for **");
            if (is_int_like(base) && is_int_like(exp) && as_int(exp) >= 0) {
                std::int64_t b = as_int(base), e = as_int(exp), r = 1;
                for (std::int64_t i = 0; i < e; ++i) {
                    if (__builtin_mul_overflow(r, b, &r)) throw TemplateError("integer overflow");
                    if (r == 0 || r == 1) break;
                    if (r == -1) {
                        r = ((e - i - 1) % 2 == 0) ? -1 : 1;
                        break;
                    }
                }
                return r;
            }
            double r = std::pow(as_double(base), as_double(exp));
            if (std::isnan(r)) throw TemplateError("math domain error");
            return r;
        }
        return base;
    }

    Value primary() {
        skip_ws();
        char c = peek();
        if (c == '(') {
            ++pos_;
            Value v = expression();
            if (!accept(")")) throw TemplateError("expected )");
            return v;
        }
        if (c == '\'' || c == '"') return string_literal();
        if ((c >= '0' && c <= '9') || (c == '.' && peek(1) >= '0' && peek(1) <= '9')) return number();
        std::string name = identifier();
        if (name.empty()) throw TemplateError("unexpected character");
        skip_ws();
        if (peek() == '(' || peek() == '.' || peek() == '[') throw TemplateError("unsupported construct");
        if (name == "True") return true;
        if (name == "False") return false;
        if (name == "None") return NoneValue{};
        auto it = vars_.find(name);
        if (it == vars_.end()) throw TemplateError("name '" + name + "' is not defined");
        return it->second;
    }

    Value string_literal() {
        char quote = src_[pos_++];
        std::string s;
        while (pos_ < src_.size() && src_[pos_] != quote) {
            char c = src_[pos_++];
            if (c == '\\' && pos_ < src_.size()) {
                char e = src_[pos_++];
                switch (e) {
                    case 'n': s.push_back('\n'); break;
                    case 't': s.push_back('\t'); break;
                    case '\\': s.push_back('\\'); break;
                    case '\'': s.push_back('\''); break;
                    case '"': s.push_back('"'); break;
                    default:
                        s.push_back('\\');
                        s.push_back(e);
                }
            } else {
                s.push_back(c);
            }
        }
        if (pos_ >= src_.size()) throw TemplateError("unterminated string");
        ++pos_;
        return s;
    }

    Value number() {
        std::size_t start = pos_;
        bool is_float = false;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c >= '0' && c <= '9') {
                ++pos_;
            } else if (c == '.' || c == 'e' || c == 'E') {
                is_float = true;
                ++pos_;
                if ((c == 'e' || c == 'E') && (peek() == '+' || peek() == '-')) ++pos_;
            } else if (c == '_') {
                ++pos_;
            } else {
                break;
            }
        }
        std::string text;
        for (char c : src_.substr(start, pos_ - start)) {
            if (c != '_') text.push_back(c);
        }
        if (is_float) {
            double d = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
            if (ec != std::errc{} || p != text.data() + text.size()) throw TemplateError("invalid number");
            return d;
        }
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
        if (ec != std::errc{} || p != text.data() + text.size()) throw TemplateError("integer overflow");
        return i;
    }

    static Value add(const Value& a, const Value& b) {
        if (is_int_like(a) && is_int_like(b)) {
            return checked(add_ovf, as_int(a), as_int(b));
        }
        if (is_number(a) && is_number(b)) return as_double(a) + as_double(b);
        auto sa = std::get_if<std::string>(&a);
        auto sb = std::get_if<std::string>(&b);
        if (sa && sb) {
            if (sa->size() + sb->size() > kOutputLimit) throw TemplateError("string too long");
            return *sa + *sb;
        }
        throw TemplateError("unsupported operand types for +");
    }

    static Value sub(const Value& a, const Value& b) {
        if (is_int_like(a) && is_int_like(b)) {
            return checked(sub_ovf, as_int(a), as_int(b));
        }
        if (is_number(a) && is_number(b)) return as_double(a) - as_double(b);
        throw TemplateError("unsupported operand types for -");
    }

    static Value repeat(const std::string& s, std::int64_t n) {
        if (n <= 0) return std::string{};
        if (s.size() * static_cast<std::uint64_t>(n) > kOutputLimit) throw TemplateError("string too long");
        std::string out;
        for (std::int64_t i = 0; i < n; ++i) out += s;
        return out;
    }

    static Value mul_like(const Value& a, std::string_view op, const Value& b) {
        if (op == "*") {
            if (auto s = std::get_if<std::string>(&a); s && is_int_like(b)) return repeat(*s, as_int(b));
            if (auto s = std::get_if<std::string>(&b); s && is_int_like(a)) return repeat(*s, as_int(a));
        }
        if (!is_number(a) || !is_number(b)) throw TemplateError("unsupported operand types");
        if (op == "*") {
            if (is_int_like(a) && is_int_like(b)) {
                return checked(mul_ovf, as_int(a), as_int(b));
            }
            return as_double(a) * as_double(b);
        }
        if (as_double(b) == 0.0) throw TemplateError("division by zero");
        if (op == "/") return as_double(a) / as_double(b);
        if (is_int_like(a) && is_int_like(b)) {
            std::int64_t x = as_int(a), y = as_int(b);
            if (x == INT64_MIN && y == -1) throw TemplateError("integer overflow");
            std::int64_t q = x / y, m = x % y;
            if (m != 0 && ((m < 0) != (y < 0))) {
                --q;
                m += y;
            }
            return op == "//" ? q : m;
        }
        double x = as_double(a), y = as_double(b);
        if (op == "//") return std::floor(x / y);
        return floor_mod(x, y);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::map<std::string, Value>& vars_;
    const Deadline& deadline_;
    std::size_t steps_ = 0;
    int depth_guard_ = 0;
};

std::string xhtml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

void append_capped(std::string& out, std::string_view piece) {
    if (out.size() + piece.size() > kOutputLimit) throw TemplateError("output too large");
    out.append(piece);
}

std::string render_tornado(std::string_view payload, const Deadline& deadline) {
    std::map<std::string, Value> vars;
    std::string out;
    std::size_t pos = 0;
    while (pos < payload.size()) {
        auto open = payload.find("{{", pos);
        if (open == std::string_view::npos) {
            append_capped(out, payload.substr(pos));
            break;
        }
        append_capped(out, payload.substr(pos, open - pos));
        auto close = payload.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("Missing end expression }}");
        auto expr = util::trim(payload.substr(open + 2, close - open - 2));
        if (expr.empty()) throw TemplateError("Empty expression");
        ExprParser parser(expr, vars, deadline);
        Value v = parser.parse_expression_only();
        // tornado autoescapes string output; numbers pass through unchanged
        append_capped(out, std::holds_alternative<std::string>(v) ? xhtml_escape(to_text(v)) : to_text(v));
        pos = close + 2;
    }
    return out;
}

std::string render_mako(std::string_view payload, const Deadline& deadline) {
    std::map<std::string, Value> vars;
    std::string out;
    std::size_t pos = 0;
    while (pos < payload.size()) {
        auto block = payload.find("<%", pos);
        auto subst = payload.find("${", pos);
        auto next = std::min(block, subst);
        if (next == std::string_view::npos) {
            append_capped(out, payload.substr(pos));
            break;
        }
        append_capped(out, payload.substr(pos, next - pos));
        if (next == block) {
            auto close = payload.find("%>", block + 2);
            if (close == std::string_view::npos) throw TemplateError("Unterminated code block");
            auto code = payload.substr(block + 2, close - block - 2);
            if (!code.empty() && (code.front() == '!' || code.front() == '/' || util::is_word_char(code.front()))) {
                // <%! %>, <%def>, <%include .../> and friends
                throw TemplateError("unsupported block");
            }
            ExprParser parser(code, vars, deadline);
            parser.run_statements();
            pos = close + 2;
        } else {
            auto close = payload.find('}', subst + 2);
            if (close == std::string_view::npos) throw TemplateError("Unterminated expression");
            auto expr = util::trim(payload.substr(subst + 2, close - subst - 2));
            if (auto bar = expr.find('|'); bar != std::string_view::npos) expr = util::trim(expr.substr(0, bar));
            ExprParser parser(expr, vars, deadline);
            append_capped(out, to_text(parser.parse_expression_only()));
            pos = close + 1;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(TemplateEngine engine) {
    return engine == TemplateEngine::tornado_style ? "tornado" : "mako";
}

std::optional<TemplateEngine> detect_template_engine(std::string_view payload) {
    auto open = payload.find("{{");
    if (open != std::string_view::npos && payload.find("}}", open + 2) != std::string_view::npos) {
        return TemplateEngine::tornado_style;
    }
    auto block = payload.find("<%");
    if (block != std::string_view::npos && payload.find("%>", block + 2) != std::string_view::npos) {
        return TemplateEngine::mako_style;
    }
    auto subst = payload.find("${");
    if (subst != std::string_view::npos && payload.find('}', subst + 2) != std::string_view::npos) {
        return TemplateEngine::mako_style;
    }
    return std::nullopt;
}

std::string python_float_repr(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == 0.0) return std::signbit(value) ? "-0.0" : "0.0";

    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::scientific);
    std::string_view sci(buf, static_cast<std::size_t>(res.ptr - buf));
    bool negative = sci.front() == '-';
    if (negative) sci.remove_prefix(1);
    auto e = sci.find('e');
    std::string digits;
    for (char c : sci.substr(0, e)) {
        if (c != '.') digits.push_back(c);
    }
    int exponent = std::stoi(std::string(sci.substr(e + 1)));

    std::string out = negative ? "-" : "";
    if (exponent >= -5 + 1 && exponent < 16) {
        if (exponent < 0) {
            out += "0." + std::string(static_cast<std::size_t>(-exponent - 1), '0') + digits;
        } else if (static_cast<std::size_t>(exponent) + 1 >= digits.size()) {
            out += digits + std::string(static_cast<std::size_t>(exponent) + 1 - digits.size(), '0') + ".0";
        } else {
            out += digits.substr(0, static_cast<std::size_t>(exponent) + 1) + "." +
                   digits.substr(static_cast<std::size_t>(exponent) + 1);
        }
        return out;
    }
    out += digits.substr(0, 1);
    if (digits.size() > 1) out += "." + digits.substr(1);
    char expbuf[16];
    std::snprintf(expbuf, sizeof expbuf, "e%c%02d", exponent < 0 ? '-' : '+', std::abs(exponent));
    return out + expbuf;
}

TemplateOutcome eval_template(TemplateEngine engine, std::string_view payload, const Deadline& deadline) {
    try {
        auto rendered = engine == TemplateEngine::tornado_style ? render_tornado(payload, deadline)
                                                                : render_mako(payload, deadline);
        return {true, std::move(rendered), {}};
    } catch (const TemplateError& e) {
        return {false, {}, e.what()};
    }
}

}  // namespace webtrap::sandbox
