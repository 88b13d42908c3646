#include "webtrap/sandbox/php_value.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

namespace webtrap::sandbox {

bool PhpArray::operator==(const PhpArray& other) const { return entries == other.entries; }
bool PhpObject::operator==(const PhpObject& other) const {
    return class_name == other.class_name && properties == other.properties;
}
bool PhpValue::operator==(const PhpValue& other) const {
    if (data.index() != other.data.index()) return false;
    if (auto d = std::get_if<double>(&data)) {
        // bitwise so that NAN round-trips compare equal
        double o = std::get<double>(other.data);
        return std::memcmp(d, &o, sizeof o) == 0 || (std::isnan(*d) && std::isnan(o));
    }
    return data == other.data;
}

PhpParseError::PhpParseError(std::size_t offset, const std::string& message)
    : std::runtime_error("unserialize(): Error at offset " + std::to_string(offset) + ": " + message),
      offset_(offset) {}

namespace {

constexpr int kMaxDepth = 64;

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    PhpValue parse_all() {
        PhpValue v = value(0);
        if (pos_ != s_.size()) throw PhpParseError(pos_, "trailing data");
        return v;
    }

private:
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    void expect(char c) {
        if (peek() != c) {
            throw PhpParseError(pos_, pos_ >= s_.size() ? "unexpected end of data"
                                                        : std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    std::int64_t integer_until(char terminator) {
        std::size_t start = pos_;
        if (peek() == '-' || peek() == '+') ++pos_;
        while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') ++pos_;
        std::string_view digits = s_.substr(start, pos_ - start);
        if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size()) {
            throw PhpParseError(start, "invalid integer");
        }
        expect(terminator);
        return v;
    }

    std::size_t length_until(char terminator) {
        std::size_t start = pos_;
        auto v = integer_until(terminator);
        if (v < 0) throw PhpParseError(start, "negative length");
        return static_cast<std::size_t>(v);
    }

    std::string quoted(std::size_t len) {
        expect('"');
        if (len > s_.size() - pos_) throw PhpParseError(pos_, "string length exceeds remaining data");
        std::string out(s_.substr(pos_, len));
        pos_ += len;
        if (peek() != '"') throw PhpParseError(pos_, "string length mismatch");
        ++pos_;
        return out;
    }

    std::vector<PhpEntry> entries(std::size_t count, int depth, bool object) {
        expect('{');
        // every entry needs at least "i:0;N;" (6 bytes)
        if (count > (s_.size() - pos_) / 6 + 1) throw PhpParseError(pos_, "element count exceeds data");
        std::vector<PhpEntry> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t key_at = pos_;
            PhpValue key = value(depth + 1);
            bool valid_key = std::holds_alternative<std::int64_t>(key.data) ||
                             std::holds_alternative<std::string>(key.data);
            if (!valid_key) throw PhpParseError(key_at, object ? "invalid property name" : "invalid array key");
            PhpValue val = value(depth + 1);
            out.push_back({std::move(key), std::move(val)});
        }
        expect('}');
        return out;
    }

    PhpValue value(int depth) {
        if (depth > kMaxDepth) throw PhpParseError(pos_, "nesting too deep");
        std::size_t start = pos_;
        char tag = peek();
        if (pos_ >= s_.size()) throw PhpParseError(pos_, "unexpected end of data");
        ++pos_;
        switch (tag) {
            case 'N':
                expect(';');
                return {PhpNull{}};
            case 'b': {
                expect(':');
                char c = peek();
                if (c != '0' && c != '1') throw PhpParseError(pos_, "invalid boolean");
                ++pos_;
                expect(';');
                return {c == '1'};
            }
            case 'i':
                expect(':');
                return {integer_until(';')};
            case 'd': {
                expect(':');
                auto end = s_.find(';', pos_);
                if (end == std::string_view::npos) throw PhpParseError(pos_, "unexpected end of data");
                std::string_view text = s_.substr(pos_, end - pos_);
                double d = 0;
                if (text == "INF") {
                    d = HUGE_VAL;
                } else if (text == "-INF") {
                    d = -HUGE_VAL;
                } else if (text == "NAN") {
                    d = std::nan("");
                } else {
                    auto body = text;
                    if (!body.empty() && body.front() == '+') body.remove_prefix(1);
                    auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), d);
                    if (body.empty() || ec != std::errc{} || p != body.data() + body.size()) {
                        throw PhpParseError(pos_, "invalid float");
                    }
                }
                pos_ = end + 1;
                return {d};
            }
            case 's': {
                expect(':');
                auto len = length_until(':');
                std::string str = quoted(len);
                expect(';');
                return {std::move(str)};
            }
            case 'a': {
                expect(':');
                auto count = length_until(':');
                return {PhpArray{entries(count, depth, false)}};
            }
            case 'O': {
                expect(':');
                auto len = length_until(':');
                std::size_t name_at = pos_ + 1;
                std::string name = quoted(len);
                if (name.empty()) throw PhpParseError(name_at, "empty class name");
                for (char c : name) {
                    auto u = static_cast<unsigned char>(c);
                    if (!(std::isalnum(u) || c == '_' || c == '\\' || u >= 0x80)) {
                        throw PhpParseError(name_at, "invalid class name");
                    }
                }
                expect(':');
                auto count = length_until(':');
                return {PhpObject{std::move(name), entries(count, depth, true)}};
            }
            default:
                throw PhpParseError(start, "unsupported type tag");
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

void serialize_into(const PhpValue& v, std::string& out) {
    struct Visitor {
        std::string& out;
        void operator()(PhpNull) const { out += "N;"; }
        void operator()(bool b) const { out += b ? "b:1;" : "b:0;"; }
        void operator()(std::int64_t i) const { out += "i:" + std::to_string(i) + ";"; }
        void operator()(double d) const { out += "d:" + php_float_repr(d) + ";"; }
        void operator()(const std::string& s) const { out += "s:" + std::to_string(s.size()) + ":\"" + s + "\";"; }
        void operator()(const PhpArray& a) const {
            out += "a:" + std::to_string(a.entries.size()) + ":{";
            for (const auto& e : a.entries) {
                serialize_into(e.key, out);
                serialize_into(e.value, out);
            }
            out += "}";
        }
        void operator()(const PhpObject& o) const {
            out += "O:" + std::to_string(o.class_name.size()) + ":\"" + o.class_name + "\":" +
                   std::to_string(o.properties.size()) + ":{";
            for (const auto& e : o.properties) {
                serialize_into(e.key, out);
                serialize_into(e.value, out);
            }
            out += "}";
        }
    };
    std::visit(Visitor{out}, v.data);
}

struct Dumper {
    std::string out;
    int next_handle = 1;

    void indent(int level) { out.append(static_cast<std::size_t>(level) * 2, ' '); }

    void key(const PhpValue& k, int level, bool property) {
        indent(level);
        if (auto i = std::get_if<std::int64_t>(&k.data)) {
            out += "[" + std::to_string(*i) + "]=>\n";
            return;
        }
        const auto& s = std::get<std::string>(k.data);
        if (property && s.size() > 2 && s[0] == '\0') {
            auto second = s.find('\0', 1);
            if (second != std::string::npos) {
                auto scope = s.substr(1, second - 1);
                auto name = s.substr(second + 1);
                if (scope == "*") out += "[\"" + name + "\":protected]=>\n";
                else out += "[\"" + name + "\":\"" + scope + "\":private]=>\n";
                return;
            }
        }
        out += "[\"" + s + "\"]=>\n";
    }

    void dump(const PhpValue& v, int level) {
        struct Visitor {
            Dumper& d;
            int level;
            void operator()(PhpNull) const { d.line(level, "NULL"); }
            void operator()(bool b) const { d.line(level, b ? "bool(true)" : "bool(false)"); }
            void operator()(std::int64_t i) const { d.line(level, "int(" + std::to_string(i) + ")"); }
            void operator()(double x) const { d.line(level, "float(" + php_float_repr(x) + ")"); }
            void operator()(const std::string& s) const {
                d.line(level, "string(" + std::to_string(s.size()) + ") \"" + s + "\"");
            }
            void operator()(const PhpArray& a) const {
                d.line(level, "array(" + std::to_string(a.entries.size()) + ") {");
                for (const auto& e : a.entries) {
                    d.key(e.key, level + 1, false);
                    d.dump(e.value, level + 1);
                }
                d.line(level, "}");
            }
            void operator()(const PhpObject& o) const {
                d.line(level, "object(" + o.class_name + ")#" + std::to_string(d.next_handle++) + " (" +
                                  std::to_string(o.properties.size()) + ") {");
                for (const auto& e : o.properties) {
                    d.key(e.key, level + 1, true);
                    d.dump(e.value, level + 1);
                }
                d.line(level, "}");
            }
        };
        std::visit(Visitor{*this, level}, v.data);
    }

    void line(int level, const std::string& text) {
        indent(level);
        out += text;
        out += "\n";
    }
};

void collect_classes(const PhpValue& v, std::vector<std::string>& out) {
    if (auto o = std::get_if<PhpObject>(&v.data)) {
        out.push_back(o->class_name);
        for (const auto& e : o->properties) collect_classes(e.value, out);
    } else if (auto a = std::get_if<PhpArray>(&v.data)) {
        for (const auto& e : a->entries) collect_classes(e.value, out);
    }
}

}  // namespace

PhpValue unserialize_php(std::string_view text) {
    Parser parser(text);
    return parser.parse_all();
}

std::string serialize_php(const PhpValue& value) {
    std::string out;
    serialize_into(value, out);
    return out;
}

std::string var_dump(const PhpValue& value) {
    Dumper d;
    d.dump(value, 0);
    return d.out;
}

std::vector<std::string> object_classes(const PhpValue& value) {
    std::vector<std::string> out;
    collect_classes(value, out);
    return out;
}

std::string php_float_repr(double value) {
    if (std::isnan(value)) return "NAN";
    if (std::isinf(value)) return value > 0 ? "INF" : "-INF";
    if (value == 0.0) return std::signbit(value) ? "-0" : "0";

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
    int decpt = exponent + 1;

    std::string out = negative ? "-" : "";
    if (decpt < -3 || decpt > 15) {
        out += digits.substr(0, 1) + "." + (digits.size() > 1 ? digits.substr(1) : "0");
        out += "E";
        out += exponent < 0 ? "-" : "+";
        out += std::to_string(std::abs(exponent));
        return out;
    }
    if (decpt <= 0) {
        out += "0." + std::string(static_cast<std::size_t>(-decpt), '0') + digits;
    } else if (static_cast<std::size_t>(decpt) >= digits.size()) {
        out += digits + std::string(static_cast<std::size_t>(decpt) - digits.size(), '0');
    } else {
        out += digits.substr(0, static_cast<std::size_t>(decpt)) + "." + digits.substr(static_cast<std::size_t>(decpt));
    }
    return out;
}

}  // namespace webtrap::sandbox
