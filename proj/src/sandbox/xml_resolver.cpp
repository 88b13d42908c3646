#include "webtrap/sandbox/xml_resolver.hpp"

#include <httplib.h>

#include <map>
#include <stdexcept>

#include "webtrap/sandbox/limits.hpp"
#include "webtrap/util/strings.hpp"
#include "webtrap/util/url.hpp"

namespace webtrap::sandbox {

namespace {

struct XmlError : std::runtime_error {
    XmlError(const std::string& msg, std::size_t offset) : std::runtime_error(msg), offset(offset) {}
    std::size_t offset;
};

struct GuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Empty entities never grow the output, so the byte cap alone cannot stop
// a wide bomb of them.
constexpr std::size_t kMaxExpansions = 100000;

struct EntityDecl {
    bool external = false;
    std::string value;  // replacement text, or SYSTEM uri when external
};

bool is_name_char(char c) {
    return util::is_word_char(c) || c == '-' || c == '.' || c == ':' || static_cast<unsigned char>(c) >= 0x80;
}

bool is_remote(std::string_view uri) {
    return util::istarts_with(uri, "http://") || util::istarts_with(uri, "https://") ||
           util::istarts_with(uri, "ftp://");
}

std::string encode_char_ref(unsigned long cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

class Resolver {
public:
    Resolver(std::string_view doc, const VirtualFilesystem& vfs, const std::optional<std::string>& collector,
             const HttpGetter& http_get)
        : doc_(doc), vfs_(vfs), collector_(collector), http_get_(http_get) {}

    XmlOutcome run() {
        XmlOutcome outcome;
        try {
            parse_document();
            outcome.ok = true;
            outcome.text = std::move(out_);
        } catch (const GuardError& e) {
            outcome.error = std::string("Detected an entity reference loop: ") + e.what();
        } catch (const XmlError& e) {
            outcome.error = "XML parse error at line " + std::to_string(line_of(e.offset)) + ": " + e.what();
        }
        outcome.exchanges = std::move(exchanges_);
        return outcome;
    }

private:
    std::size_t line_of(std::size_t offset) const {
        std::size_t line = 1;
        for (std::size_t i = 0; i < offset && i < doc_.size(); ++i) {
            if (doc_[i] == '\n') ++line;
        }
        return line;
    }

    // ---- document level -------------------------------------------------

    void parse_document() {
        std::size_t pos = 0;
        if (doc_.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
        bool seen_doctype = false;
        while (true) {
            pos = skip_ws(doc_, pos);
            if (doc_.substr(pos, 2) == "<?") {
                auto end = doc_.find("?>", pos + 2);
                if (end == std::string_view::npos) throw XmlError("unterminated processing instruction", pos);
                pos = end + 2;
            } else if (doc_.substr(pos, 4) == "<!--") {
                pos = skip_comment(doc_, pos);
            } else if (util::istarts_with(doc_.substr(pos), "<!DOCTYPE")) {
                if (seen_doctype) throw XmlError("duplicate DOCTYPE", pos);
                seen_doctype = true;
                pos = parse_doctype(pos + 9);
            } else {
                break;
            }
        }
        if (pos >= doc_.size() || doc_[pos] != '<') throw XmlError("Start tag expected, '<' not found", pos);
        pos = parse_element_tree(pos);
        while (true) {
            pos = skip_ws(doc_, pos);
            if (pos >= doc_.size()) break;
            if (doc_.substr(pos, 4) == "<!--") {
                pos = skip_comment(doc_, pos);
            } else if (doc_.substr(pos, 2) == "<?") {
                auto end = doc_.find("?>", pos + 2);
                if (end == std::string_view::npos) throw XmlError("unterminated processing instruction", pos);
                pos = end + 2;
            } else {
                throw XmlError("Extra content at the end of the document", pos);
            }
        }
    }

    static std::size_t skip_ws(std::string_view s, std::size_t pos) {
        while (pos < s.size() && util::is_space(s[pos])) ++pos;
        return pos;
    }

    std::size_t skip_comment(std::string_view s, std::size_t pos) const {
        auto end = s.find("-->", pos + 4);
        if (end == std::string_view::npos) throw XmlError("Comment not terminated", pos);
        return end + 3;
    }

    static std::pair<std::string, std::size_t> read_name(std::string_view s, std::size_t pos) {
        std::size_t start = pos;
        while (pos < s.size() && is_name_char(s[pos])) ++pos;
        return {std::string(s.substr(start, pos - start)), pos};
    }

    std::pair<std::string, std::size_t> read_quoted(std::string_view s, std::size_t pos) const {
        if (pos >= s.size() || (s[pos] != '"' && s[pos] != '\'')) throw XmlError("quoted literal expected", pos);
        auto end = s.find(s[pos], pos + 1);
        if (end == std::string_view::npos) throw XmlError("unterminated literal", pos);
        return {std::string(s.substr(pos + 1, end - pos - 1)), end + 1};
    }

    std::size_t parse_doctype(std::size_t pos) {
        pos = skip_ws(doc_, pos);
        auto [name, after] = read_name(doc_, pos);
        if (name.empty()) throw XmlError("DOCTYPE name expected", pos);
        pos = skip_ws(doc_, after);
        std::optional<std::string> external_subset;
        if (util::istarts_with(doc_.substr(pos), "SYSTEM")) {
            auto [uri, next] = read_quoted(doc_, skip_ws(doc_, pos + 6));
            external_subset = uri;
            pos = skip_ws(doc_, next);
        } else if (util::istarts_with(doc_.substr(pos), "PUBLIC")) {
            auto [pubid, next] = read_quoted(doc_, skip_ws(doc_, pos + 6));
            auto [uri, next2] = read_quoted(doc_, skip_ws(doc_, next));
            (void)pubid;
            external_subset = uri;
            pos = skip_ws(doc_, next2);
        }
        if (pos < doc_.size() && doc_[pos] == '[') {
            auto end = parse_subset(doc_, pos + 1, 0, true);
            pos = skip_ws(doc_, end + 1);
        }
        if (pos >= doc_.size() || doc_[pos] != '>') throw XmlError("DOCTYPE improperly terminated", pos);
        if (external_subset) {
            // libxml loads the external subset after the internal one.
            auto text = dereference(*external_subset, 0);
            parse_subset(text, 0, 1, false);
        }
        return pos + 1;
    }

    // Parses markup declarations from s starting at pos. With bracketed,
    // stops at the closing ']' and returns its offset.
    std::size_t parse_subset(std::string_view s, std::size_t pos, int depth, bool bracketed) {
        if (depth > kXmlDepthLimit) throw GuardError("parameter entity nesting too deep");
        while (true) {
            pos = skip_ws(s, pos);
            if (pos >= s.size()) {
                if (bracketed) throw XmlError("DOCTYPE internal subset not terminated", doc_.size());
                return pos;
            }
            if (s[pos] == ']') {
                if (bracketed) return pos;
                throw XmlError("unexpected ']' in DTD", pos);
            }
            if (s.substr(pos, 4) == "<!--") {
                pos = skip_comment(s, pos);
            } else if (s.substr(pos, 2) == "<?") {
                auto end = s.find("?>", pos + 2);
                if (end == std::string_view::npos) throw XmlError("unterminated processing instruction", pos);
                pos = end + 2;
            } else if (s.substr(pos, 8) == "<!ENTITY") {
                pos = parse_entity_decl(s, pos + 8, depth);
            } else if (s.substr(pos, 2) == "<!") {
                pos = skip_declaration(s, pos);
            } else if (s[pos] == '%') {
                auto [name, after] = read_name(s, pos + 1);
                if (name.empty() || after >= s.size() || s[after] != ';') throw XmlError("malformed PEReference", pos);
                auto it = parameter_entities_.find(name);
                if (it == parameter_entities_.end()) throw XmlError("PEReference: %" + name + "; not found", pos);
                std::string text =
                    it->second.external ? dereference(it->second.value, depth + 1) : it->second.value;
                parse_subset(text, 0, depth + 1, false);
                pos = after + 1;
            } else {
                throw XmlError("malformed declaration in DTD", pos);
            }
        }
    }

    std::size_t skip_declaration(std::string_view s, std::size_t pos) const {
        char quote = 0;
        for (std::size_t i = pos + 2; i < s.size(); ++i) {
            char c = s[i];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '>') {
                return i + 1;
            }
        }
        throw XmlError("declaration not terminated", pos);
    }

    std::size_t parse_entity_decl(std::string_view s, std::size_t pos, int depth) {
        pos = skip_ws(s, pos);
        bool parameter = false;
        if (pos < s.size() && s[pos] == '%') {
            parameter = true;
            pos = skip_ws(s, pos + 1);
        }
        auto [name, after] = read_name(s, pos);
        if (name.empty()) throw XmlError("xmlParseEntityDecl: no name", pos);
        pos = skip_ws(s, after);

        EntityDecl decl;
        if (pos < s.size() && (s[pos] == '"' || s[pos] == '\'')) {
            auto [literal, next] = read_quoted(s, pos);
            decl.value = expand_entity_value(literal, depth);
            pos = next;
        } else if (util::istarts_with(s.substr(pos), "SYSTEM")) {
            auto [uri, next] = read_quoted(s, skip_ws(s, pos + 6));
            decl.external = true;
            decl.value = uri;
            pos = next;
        } else if (util::istarts_with(s.substr(pos), "PUBLIC")) {
            auto [pubid, next] = read_quoted(s, skip_ws(s, pos + 6));
            (void)pubid;
            auto [uri, next2] = read_quoted(s, skip_ws(s, next));
            decl.external = true;
            decl.value = uri;
            pos = next2;
        } else {
            throw XmlError("Entity value required", pos);
        }
        pos = skip_ws(s, pos);
        if (util::istarts_with(s.substr(pos), "NDATA")) {
            auto [notation, next] = read_name(s, skip_ws(s, pos + 5));
            (void)notation;
            pos = skip_ws(s, next);
        }
        if (pos >= s.size() || s[pos] != '>') throw XmlError("EntityDecl: entity " + name + " not terminated", pos);

        auto& table = parameter ? parameter_entities_ : general_entities_;
        table.try_emplace(name, std::move(decl));  // first declaration is binding
        return pos + 1;
    }

    // Declaration-time processing of an entity literal: character references
    // and parameter-entity references are replaced, general references stay.
    std::string expand_entity_value(std::string_view literal, int depth) {
        if (depth > kXmlDepthLimit) throw GuardError("parameter entity nesting too deep");
        std::string out;
        for (std::size_t i = 0; i < literal.size(); ++i) {
            char c = literal[i];
            if (c == '&' && i + 1 < literal.size() && literal[i + 1] == '#') {
                auto semi = literal.find(';', i);
                if (semi == std::string_view::npos) throw XmlError("malformed character reference", 0);
                auto body = literal.substr(i + 2, semi - i - 2);
                unsigned long cp = 0;
                try {
                    cp = (!body.empty() && (body[0] == 'x' || body[0] == 'X'))
                             ? std::stoul(std::string(body.substr(1)), nullptr, 16)
                             : std::stoul(std::string(body), nullptr, 10);
                } catch (const std::exception&) {
                    throw XmlError("malformed character reference", 0);
                }
                if (cp == 0 || cp > 0x10FFFF) throw XmlError("invalid character reference", 0);
                out += encode_char_ref(cp);
                i = semi;
            } else if (c == '%') {
                auto [name, after] = read_name(literal, i + 1);
                if (name.empty() || after >= literal.size() || literal[after] != ';') {
                    out.push_back(c);
                    continue;
                }
                auto it = parameter_entities_.find(name);
                if (it == parameter_entities_.end()) throw XmlError("PEReference: %" + name + "; not found", 0);
                std::string text =
                    it->second.external ? dereference(it->second.value, depth + 1) : it->second.value;
                out += expand_entity_value(text, depth + 1);
                i = after;
            } else {
                out.push_back(c);
            }
            if (out.size() > kXmlExpansionLimit) throw GuardError("entity expansion exceeds 64 KiB");
        }
        return out;
    }

    // Loads an external identifier.
    std::string dereference(const std::string& uri, int depth) {
        if (depth > kXmlDepthLimit) throw GuardError("entity nesting too deep");
        if (is_remote(uri)) {
            XmlExchange exchange;
            exchange.original_uri = uri;
            if (collector_) {
                exchange.requested_url = rewrite_to_collector(uri, *collector_);
                if (auto body = http_get_(exchange.requested_url)) {
                    exchange.delivered = true;
                    exchange.response_body = body->substr(0, kXmlExpansionLimit);
                }
            }
            std::string body = exchange.response_body;
            exchanges_.push_back(std::move(exchange));
            return body;
        }
        if (auto content = read_stream(uri, vfs_, "/var/www/html")) return *content;
        // libxml warns "failed to load external entity" and carries on
        return {};
    }

    // ---- element tree ---------------------------------------------------

    std::size_t parse_element_tree(std::size_t pos) {
        std::vector<std::string> stack;
        while (pos < doc_.size()) {
            char c = doc_[pos];
            if (c == '<') {
                if (doc_.substr(pos, 4) == "<!--") {
                    auto end = skip_comment(doc_, pos);
                    emit(doc_.substr(pos, end - pos));
                    pos = end;
                } else if (doc_.substr(pos, 9) == "<![CDATA[") {
                    auto end = doc_.find("]]>", pos);
                    if (end == std::string_view::npos) throw XmlError("CData section not finished", pos);
                    emit(doc_.substr(pos, end + 3 - pos));
                    pos = end + 3;
                } else if (doc_.substr(pos, 2) == "<?") {
                    auto end = doc_.find("?>", pos);
                    if (end == std::string_view::npos) throw XmlError("unterminated processing instruction", pos);
                    emit(doc_.substr(pos, end + 2 - pos));
                    pos = end + 2;
                } else if (doc_.substr(pos, 2) == "</") {
                    auto [name, after] = read_name(doc_, pos + 2);
                    after = skip_ws(doc_, after);
                    if (after >= doc_.size() || doc_[after] != '>') throw XmlError("expected '>'", after);
                    if (stack.empty() || stack.back() != name) {
                        throw XmlError("Opening and ending tag mismatch: " + (stack.empty() ? name : stack.back()) +
                                           " and " + name,
                                       pos);
                    }
                    stack.pop_back();
                    emit(doc_.substr(pos, after + 1 - pos));
                    pos = after + 1;
                    if (stack.empty()) return pos;
                } else {
                    bool self_closing = false;
                    pos = parse_start_tag(pos, stack, self_closing);
                    if (self_closing && stack.empty()) return pos;
                }
            } else if (c == '&') {
                pos = expand_reference(pos);
            } else {
                if (stack.empty()) throw XmlError("Start tag expected", pos);
                auto next = doc_.find_first_of("<&", pos);
                if (next == std::string_view::npos) next = doc_.size();
                emit(doc_.substr(pos, next - pos));
                pos = next;
            }
        }
        throw XmlError("Premature end of data in tag " + (stack.empty() ? std::string("?") : stack.back()),
                       doc_.size());
    }

    std::size_t parse_start_tag(std::size_t pos, std::vector<std::string>& stack, bool& self_closing) {
        auto [name, after] = read_name(doc_, pos + 1);
        if (name.empty()) throw XmlError("StartTag: invalid element name", pos);
        emit(doc_.substr(pos, after - pos));
        pos = after;
        while (true) {
            auto ws = skip_ws(doc_, pos);
            emit(doc_.substr(pos, ws - pos));
            pos = ws;
            if (pos >= doc_.size()) throw XmlError("Couldn't find end of Start Tag " + name, pos);
            if (doc_[pos] == '>') {
                emit(">");
                stack.push_back(name);
                return pos + 1;
            }
            if (doc_.substr(pos, 2) == "/>") {
                emit("/>");
                self_closing = true;
                return pos + 2;
            }
            auto [attr, attr_end] = read_name(doc_, pos);
            if (attr.empty()) throw XmlError("attributes construct error", pos);
            auto eq = skip_ws(doc_, attr_end);
            if (eq >= doc_.size() || doc_[eq] != '=') throw XmlError("Specification mandates value for attribute " + attr, eq);
            auto value_pos = skip_ws(doc_, eq + 1);
            if (value_pos >= doc_.size() || (doc_[value_pos] != '"' && doc_[value_pos] != '\'')) {
                throw XmlError("AttValue: \" or ' expected", value_pos);
            }
            char quote = doc_[value_pos];
            auto close = doc_.find(quote, value_pos + 1);
            if (close == std::string_view::npos) throw XmlError("AttValue: ' expected", value_pos);
            emit(doc_.substr(pos, value_pos + 1 - pos));
            std::size_t i = value_pos + 1;
            while (i < close) {
                if (doc_[i] == '&') {
                    i = expand_reference(i);
                } else {
                    auto next = doc_.find('&', i);
                    if (next == std::string_view::npos || next > close) next = close;
                    emit(doc_.substr(i, next - i));
                    i = next;
                }
            }
            emit(std::string_view(&quote, 1));
            pos = close + 1;
        }
    }

    // Handles a reference at doc_[pos] == '&' and returns the offset after ';'.
    std::size_t expand_reference(std::size_t pos) {
        if (pos + 1 < doc_.size() && doc_[pos + 1] == '#') {
            auto semi = doc_.find(';', pos);
            if (semi == std::string_view::npos) throw XmlError("CharRef: invalid decimal value", pos);
            emit(doc_.substr(pos, semi + 1 - pos));
            return semi + 1;
        }
        auto [name, after] = read_name(doc_, pos + 1);
        if (name.empty() || after >= doc_.size() || doc_[after] != ';') throw XmlError("EntityRef: expecting ';'", pos);
        static const std::map<std::string, int, std::less<>> predefined = {
            {"lt", 0}, {"gt", 0}, {"amp", 0}, {"quot", 0}, {"apos", 0}};
        if (predefined.count(name)) {
            emit(doc_.substr(pos, after + 1 - pos));
        } else {
            emit_entity(name, 0, pos);
        }
        return after + 1;
    }

    void emit_entity(const std::string& name, int depth, std::size_t offset) {
        if (depth >= kXmlDepthLimit) throw GuardError("entity nesting exceeds depth " + std::to_string(kXmlDepthLimit));
        if (++expansions_ > kMaxExpansions) throw GuardError("too many entity expansions");
        auto it = general_entities_.find(name);
        if (it == general_entities_.end()) throw XmlError("Entity '" + name + "' not defined", offset);
        if (it->second.external) {
            emit(dereference(it->second.value, depth + 1));
            return;
        }
        std::string_view text = it->second.value;
        std::size_t i = 0;
        while (i < text.size()) {
            auto amp = text.find('&', i);
            if (amp == std::string_view::npos) {
                emit(text.substr(i));
                break;
            }
            emit(text.substr(i, amp - i));
            auto [inner, after] = read_name(text, amp + 1);
            if (inner.empty() || after >= text.size() || text[after] != ';' || inner == "lt" || inner == "gt" ||
                inner == "amp" || inner == "quot" || inner == "apos") {
                emit("&");
                i = amp + 1;
                continue;
            }
            emit_entity(inner, depth + 1, offset);
            i = after + 1;
        }
    }

    void emit(std::string_view s) {
        if (out_.size() + s.size() > kXmlExpansionLimit) throw GuardError("entity expansion exceeds 64 KiB");
        out_.append(s);
    }

    std::string_view doc_;
    const VirtualFilesystem& vfs_;
    const std::optional<std::string>& collector_;
    const HttpGetter& http_get_;
    std::map<std::string, EntityDecl, std::less<>> general_entities_;
    std::map<std::string, EntityDecl, std::less<>> parameter_entities_;
    std::vector<XmlExchange> exchanges_;
    std::string out_;
    std::size_t expansions_ = 0;
};

}  // namespace

std::string rewrite_to_collector(std::string_view uri, std::string_view collector) {
    auto scheme_end = uri.find("://");
    std::string_view rest = scheme_end == std::string_view::npos ? uri : uri.substr(scheme_end + 3);
    auto slash = rest.find('/');
    std::string_view path = slash == std::string_view::npos ? std::string_view("/") : rest.substr(slash);
    // keep '/', '?', '=', '&' structural; escape whatever else would break the request line
    return "http://" + std::string(collector) + util::percent_encode(path, "/?=&%:@!$'()*+,;");
}

HttpGetter default_http_getter() {
    return [](const std::string& url) -> std::optional<std::string> {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) return std::nullopt;
        auto slash = url.find('/', scheme_end + 3);
        std::string origin = url.substr(0, slash);
        std::string path = slash == std::string::npos ? "/" : url.substr(slash);
        httplib::Client client(origin);
        client.set_connection_timeout(std::chrono::seconds(2));
        client.set_read_timeout(std::chrono::seconds(2));
        auto res = client.Get(path);
        if (!res || res->status < 200 || res->status >= 300) return std::nullopt;
        return res->body;
    };
}

XmlOutcome resolve_xml(std::string_view document, const VirtualFilesystem& vfs,
                       const std::optional<std::string>& collector, const HttpGetter& http_get) {
    Resolver resolver(document, vfs, collector, http_get);
    return resolver.run();
}

}  // namespace webtrap::sandbox
