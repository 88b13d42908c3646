#include "webtrap/sandbox/sql.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>

#include "webtrap/sandbox/limits.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::sandbox {

// ---------------------------------------------------------------------------
// Seeded table

namespace {

constexpr std::string_view kFirstNames[] = {
    "james", "mary",  "john",   "patricia", "robert", "jennifer", "michael", "linda",  "william", "elizabeth",
    "david", "susan", "joseph", "jessica",  "thomas", "sarah",    "charles", "karen",  "daniel",  "nancy",
    "mark",  "lisa",  "paul",   "betty",    "steven", "helen",    "andrew",  "sandra", "kevin",   "donna"};
constexpr std::string_view kLastNames[] = {"smith",  "johnson", "williams", "brown",  "jones",  "garcia",
                                           "miller", "davis",   "rodriguez", "martinez", "wilson", "anderson",
                                           "taylor", "thomas",  "moore",    "jackson", "martin", "lee"};
constexpr std::string_view kDomains[] = {"example.com", "mail.example.org", "corp.example.net", "example.io"};
constexpr std::string_view kPasswordAlphabet = "abcdefghijkmnpqrstuvwxyzABCDEFGHJKLMNPQRSTUVWXYZ23456789";

}  // namespace

DummyDatabase::DummyDatabase(std::uint32_t seed, std::size_t rows) : seed_(seed) {
    std::mt19937 gen(seed);
    auto pick = [&gen](std::size_t n) { return static_cast<std::size_t>(gen() % n); };
    std::set<std::string> taken;
    users_.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::string username;
        do {
            username = std::string(kFirstNames[pick(std::size(kFirstNames))]) + "." +
                       std::string(kLastNames[pick(std::size(kLastNames))]);
            if (pick(2) == 0) username += std::to_string(pick(100));
        } while (!taken.insert(username).second);
        std::string email = username + "@" + std::string(kDomains[pick(std::size(kDomains))]);
        std::string password;
        for (int c = 0; c < 10; ++c) password.push_back(kPasswordAlphabet[pick(kPasswordAlphabet.size())]);
        users_.push_back({static_cast<std::int64_t>(i + 1), std::move(username), std::move(email), std::move(password)});
    }
}

std::string render_sql_value(const SqlValue& v) {
    struct {
        std::string operator()(SqlNull) const { return "NULL"; }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(double d) const {
            char buf[64];
            auto r = std::to_chars(buf, buf + sizeof buf, d);
            return std::string(buf, r.ptr);
        }
        std::string operator()(const std::string& s) const { return s; }
    } visitor;
    return std::visit(visitor, v);
}

namespace {

struct SqlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SqlError syntax_error_near(std::string_view rest) {
    std::string token(rest.substr(0, 40));
    return SqlError("SQL syntax error near '" + token + "'");
}

// ---------------------------------------------------------------------------
// Lexer

struct Token {
    enum Kind { ident, keyword, number, string, op, end } kind;
    std::string text;  // keywords upper-cased; strings unescaped
    std::size_t offset = 0;
};

const std::set<std::string, std::less<>> kKeywords = {
    "SELECT", "FROM", "WHERE", "AND", "OR",   "NOT",  "UNION", "ALL",   "DISTINCT", "AS",    "ORDER", "BY",
    "ASC",    "DESC", "LIMIT", "OFFSET", "LIKE", "IS", "NULL", "TRUE",  "FALSE",    "XOR"};

std::vector<Token> lex(std::string_view q) {
    std::vector<Token> toks;
    std::size_t i = 0;
    while (i < q.size()) {
        char c = q[i];
        if (util::is_space(c)) {
            ++i;
            continue;
        }
        if (c == '#' || (c == '-' && i + 1 < q.size() && q[i + 1] == '-')) {
            auto nl = q.find('\n', i);
            i = nl == std::string_view::npos ? q.size() : nl + 1;
            continue;
        }
        if (c == '/' && i + 1 < q.size() && q[i + 1] == '*') {
            auto end = q.find("*/", i + 2);
            if (end == std::string_view::npos) throw syntax_error_near(q.substr(i));
            i = end + 2;
            continue;
        }
        std::size_t start = i;
        if (c == '\'' || c == '"') {
            std::string s;
            ++i;
            bool closed = false;
            while (i < q.size()) {
                if (q[i] == c) {
                    if (i + 1 < q.size() && q[i + 1] == c) {
                        s.push_back(c);
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                s.push_back(q[i++]);
            }
            if (!closed) throw syntax_error_near(q.substr(start));
            toks.push_back({Token::string, std::move(s), start});
            continue;
        }
        if (c >= '0' && c <= '9') {
            while (i < q.size() && ((q[i] >= '0' && q[i] <= '9') || q[i] == '.')) ++i;
            if (i < q.size() && util::is_word_char(q[i])) throw syntax_error_near(q.substr(start));
            toks.push_back({Token::number, std::string(q.substr(start, i - start)), start});
            continue;
        }
        if (util::is_word_char(c) || c == '`') {
            std::string word;
            if (c == '`') {
                auto end = q.find('`', i + 1);
                if (end == std::string_view::npos) throw syntax_error_near(q.substr(start));
                word = std::string(q.substr(i + 1, end - i - 1));
                i = end + 1;
                toks.push_back({Token::ident, util::to_lower(word), start});
                continue;
            }
            while (i < q.size() && util::is_word_char(q[i])) ++i;
            word = std::string(q.substr(start, i - start));
            std::string upper = word;
            for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            if (kKeywords.count(upper)) toks.push_back({Token::keyword, upper, start});
            else toks.push_back({Token::ident, util::to_lower(word), start});
            continue;
        }
        static constexpr std::string_view two_char_ops[] = {"<>", "!=", "<=", ">=", "&&", "||"};
        bool matched = false;
        for (auto op : two_char_ops) {
            if (q.substr(i, 2) == op) {
                toks.push_back({Token::op, std::string(op), start});
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("=<>(),*+-/;.").find(c) != std::string_view::npos) {
            toks.push_back({Token::op, std::string(1, c), start});
            ++i;
            continue;
        }
        throw syntax_error_near(q.substr(start));
    }
    toks.push_back({Token::end, {}, q.size()});
    return toks;
}

// ---------------------------------------------------------------------------
// AST

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
    enum Kind { literal, column, unary, binary, func, is_null } kind;
    SqlValue value;
    std::string name;  // column / function / operator
    std::vector<ExprPtr> args;
    bool negated = false;  // IS NOT NULL
};

struct SelectItem {
    bool star = false;
    ExprPtr expr;
};

struct OrderKey {
    ExprPtr expr;
    std::optional<std::size_t> position;  // ORDER BY 2
    bool desc = false;
};

struct Select {
    bool distinct = false;
    std::vector<SelectItem> items;
    bool from_users = false;
    ExprPtr where;
    std::vector<OrderKey> order;
    std::optional<std::int64_t> limit;
    std::int64_t offset = 0;
};

struct Compound {
    std::vector<Select> parts;
    std::vector<bool> union_all;  // between parts[i] and parts[i+1]
};

constexpr std::size_t kMaxUnionParts = 64;
constexpr int kMaxExprDepth = 128;

class Parser {
public:
    Parser(std::string_view q, std::vector<Token> toks) : q_(q), toks_(std::move(toks)) {}

    Compound parse() {
        Compound c;
        c.parts.push_back(select());
        while (accept_kw("UNION")) {
            if (c.parts.size() >= kMaxUnionParts) throw SqlError("Too many UNION parts");
            bool all = accept_kw("ALL");
            if (!all) accept_kw("DISTINCT");
            c.union_all.push_back(all);
            c.parts.push_back(select());
        }
        while (accept_op(";")) {
        }
        if (cur().kind != Token::end) fail();
        return c;
    }

private:
    const Token& cur() const { return toks_[pos_]; }
    [[noreturn]] void fail() const { throw syntax_error_near(q_.substr(cur().offset)); }

    bool accept_kw(std::string_view kw) {
        if (cur().kind == Token::keyword && cur().text == kw) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool accept_op(std::string_view op) {
        if (cur().kind == Token::op && cur().text == op) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect_kw(std::string_view kw) {
        if (!accept_kw(kw)) fail();
    }
    void expect_op(std::string_view op) {
        if (!accept_op(op)) fail();
    }

    Select select() {
        Select s;
        expect_kw("SELECT");
        s.distinct = accept_kw("DISTINCT");
        do {
            SelectItem item;
            if (accept_op("*")) {
                item.star = true;
            } else {
                item.expr = expr(0);
                if (accept_kw("AS")) {
                    if (cur().kind != Token::ident && cur().kind != Token::string) fail();
                    ++pos_;
                } else if (cur().kind == Token::ident) {
                    ++pos_;
                }
            }
            s.items.push_back(std::move(item));
        } while (accept_op(","));

        if (accept_kw("FROM")) {
            if (cur().kind != Token::ident) fail();
            std::string table = cur().text;
            ++pos_;
            if (accept_op(".")) {
                if (cur().kind != Token::ident) fail();
                table = cur().text;
                ++pos_;
            }
            if (table != "users") throw SqlError("Table 'webapp_prod." + table + "' doesn't exist");
            s.from_users = true;
            if (accept_kw("AS")) {
                if (cur().kind != Token::ident) fail();
                ++pos_;
            } else if (cur().kind == Token::ident) {
                ++pos_;
            }
        }
        if (accept_kw("WHERE")) s.where = expr(0);
        if (accept_kw("ORDER")) {
            expect_kw("BY");
            do {
                OrderKey key;
                if (cur().kind == Token::number && cur().text.find('.') == std::string::npos) {
                    key.position = std::stoull(cur().text.substr(0, 18));
                    ++pos_;
                } else {
                    key.expr = expr(0);
                }
                if (accept_kw("DESC")) key.desc = true;
                else accept_kw("ASC");
                s.order.push_back(std::move(key));
            } while (accept_op(","));
        }
        if (accept_kw("LIMIT")) {
            auto first = integer();
            if (accept_op(",")) {
                s.offset = first;
                s.limit = integer();
            } else {
                s.limit = first;
                if (accept_kw("OFFSET")) s.offset = integer();
            }
        }
        return s;
    }

    std::int64_t integer() {
        if (cur().kind != Token::number || cur().text.find('.') != std::string::npos) fail();
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(cur().text.data(), cur().text.data() + cur().text.size(), v);
        if (ec != std::errc{}) fail();
        ++pos_;
        return v;
    }

    // precedence climbing: 0 OR/XOR, 1 AND, 2 NOT, 3 comparison, 4 additive, 5 multiplicative
    ExprPtr expr(int depth) {
        if (depth > kMaxExprDepth) throw SqlError("Expression too complex");
        return or_expr(depth + 1);
    }

    ExprPtr make_binary(std::string op, ExprPtr a, ExprPtr b) {
        auto e = std::make_unique<Expr>();
        e->kind = Expr::binary;
        e->name = std::move(op);
        e->args.push_back(std::move(a));
        e->args.push_back(std::move(b));
        return e;
    }

    ExprPtr or_expr(int depth) {
        auto left = and_expr(depth);
        while (true) {
            if (accept_kw("OR") || accept_op("||")) left = make_binary("OR", std::move(left), and_expr(depth));
            else if (accept_kw("XOR")) left = make_binary("XOR", std::move(left), and_expr(depth));
            else return left;
        }
    }

    ExprPtr and_expr(int depth) {
        auto left = not_expr(depth);
        while (accept_kw("AND") || accept_op("&&")) left = make_binary("AND", std::move(left), not_expr(depth));
        return left;
    }

    ExprPtr not_expr(int depth) {
        if (accept_kw("NOT") || accept_op("!")) {
            if (depth > kMaxExprDepth) throw SqlError("Expression too complex");
            auto e = std::make_unique<Expr>();
            e->kind = Expr::unary;
            e->name = "NOT";
            e->args.push_back(not_expr(depth + 1));
            return e;
        }
        return comparison(depth);
    }

    ExprPtr comparison(int depth) {
        auto left = additive(depth);
        while (true) {
            if (cur().kind == Token::op &&
                (cur().text == "=" || cur().text == "<>" || cur().text == "!=" || cur().text == "<" ||
                 cur().text == ">" || cur().text == "<=" || cur().text == ">=")) {
                std::string op = cur().text == "!=" ? "<>" : cur().text;
                ++pos_;
                left = make_binary(op, std::move(left), additive(depth));
            } else if (accept_kw("LIKE")) {
                left = make_binary("LIKE", std::move(left), additive(depth));
            } else if (cur().kind == Token::keyword && cur().text == "NOT" && toks_[pos_ + 1].kind == Token::keyword &&
                       toks_[pos_ + 1].text == "LIKE") {
                pos_ += 2;
                auto like = make_binary("LIKE", std::move(left), additive(depth));
                left = std::make_unique<Expr>();
                left->kind = Expr::unary;
                left->name = "NOT";
                left->args.push_back(std::move(like));
            } else if (accept_kw("IS")) {
                auto e = std::make_unique<Expr>();
                e->kind = Expr::is_null;
                e->negated = accept_kw("NOT");
                expect_kw("NULL");
                e->args.push_back(std::move(left));
                left = std::move(e);
            } else {
                return left;
            }
        }
    }

    ExprPtr additive(int depth) {
        auto left = multiplicative(depth);
        while (cur().kind == Token::op && (cur().text == "+" || cur().text == "-")) {
            std::string op = cur().text;
            ++pos_;
            left = make_binary(op, std::move(left), multiplicative(depth));
        }
        return left;
    }

    ExprPtr multiplicative(int depth) {
        auto left = primary(depth);
        while (cur().kind == Token::op && (cur().text == "*" || cur().text == "/")) {
            std::string op = cur().text;
            ++pos_;
            left = make_binary(op, std::move(left), primary(depth));
        }
        return left;
    }

    ExprPtr primary(int depth) {
        if (depth > kMaxExprDepth) throw SqlError("Expression too complex");
        auto e = std::make_unique<Expr>();
        const Token& t = cur();
        switch (t.kind) {
            case Token::number: {
                e->kind = Expr::literal;
                if (t.text.find('.') != std::string::npos) {
                    double d = 0;
                    std::from_chars(t.text.data(), t.text.data() + t.text.size(), d);
                    e->value = d;
                } else {
                    std::int64_t v = 0;
                    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
                    if (ec != std::errc{}) {
                        double d = 0;
                        std::from_chars(t.text.data(), t.text.data() + t.text.size(), d);
                        e->value = d;
                    } else {
                        e->value = v;
                    }
                }
                ++pos_;
                return e;
            }
            case Token::string:
                e->kind = Expr::literal;
                e->value = t.text;
                ++pos_;
                return e;
            case Token::keyword:
                if (t.text == "NULL" || t.text == "TRUE" || t.text == "FALSE") {
                    e->kind = Expr::literal;
                    if (t.text == "NULL") e->value = SqlNull{};
                    else e->value = std::int64_t{t.text == "TRUE" ? 1 : 0};
                    ++pos_;
                    return e;
                }
                fail();
            case Token::ident: {
                std::string name = t.text;
                ++pos_;
                if (accept_op("(")) {
                    e->kind = Expr::func;
                    e->name = name;
                    if (!accept_op(")")) {
                        do {
                            e->args.push_back(expr(depth + 1));
                        } while (accept_op(","));
                        expect_op(")");
                    }
                    return e;
                }
                if (accept_op(".")) {  // qualified column: users.name
                    if (cur().kind != Token::ident) fail();
                    name = cur().text;
                    ++pos_;
                }
                e->kind = Expr::column;
                e->name = name;
                return e;
            }
            case Token::op:
                if (t.text == "(") {
                    ++pos_;
                    auto inner = expr(depth + 1);
                    expect_op(")");
                    return inner;
                }
                if (t.text == "-") {
                    ++pos_;
                    e->kind = Expr::binary;
                    e->name = "-";
                    auto zero = std::make_unique<Expr>();
                    zero->kind = Expr::literal;
                    zero->value = std::int64_t{0};
                    e->args.push_back(std::move(zero));
                    e->args.push_back(primary(depth + 1));
                    return e;
                }
                fail();
            case Token::end:
                fail();
        }
        fail();
    }

    std::string_view q_;
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

const std::vector<std::string> kColumns = {"id", "username", "email", "password"};

// Three-valued logic: nullopt is UNKNOWN.
using Truth = std::optional<bool>;

bool is_null(const SqlValue& v) { return std::holds_alternative<SqlNull>(v); }

// MySQL-style numeric coercion of a string: longest numeric prefix, else 0.
double to_number(const SqlValue& v) {
    if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto d = std::get_if<double>(&v)) return *d;
    if (auto s = std::get_if<std::string>(&v)) {
        auto t = util::trim(*s);
        double d = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
        return ec == std::errc{} ? d : 0.0;
    }
    return 0.0;
}

Truth truth_of(const SqlValue& v) {
    if (is_null(v)) return std::nullopt;
    return to_number(v) != 0.0;
}

SqlValue from_truth(Truth t) {
    if (!t) return SqlNull{};
    return std::int64_t{*t ? 1 : 0};
}

bool like_match(std::string_view s, std::string_view pattern) {
    // iterative wildcard matching with single backtrack point
    std::size_t si = 0, pi = 0, star_p = std::string_view::npos, star_s = 0;
    auto eq = [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b)); };
    while (si < s.size()) {
        if (pi < pattern.size() && (pattern[pi] == '_' || (pattern[pi] != '%' && eq(pattern[pi], s[si])))) {
            ++si;
            ++pi;
        } else if (pi < pattern.size() && pattern[pi] == '%') {
            star_p = pi++;
            star_s = si;
        } else if (star_p != std::string_view::npos) {
            pi = star_p + 1;
            si = ++star_s;
        } else {
            return false;
        }
    }
    while (pi < pattern.size() && pattern[pi] == '%') ++pi;
    return pi == pattern.size();
}

int compare_values(const SqlValue& a, const SqlValue& b) {
    auto sa = std::get_if<std::string>(&a);
    auto sb = std::get_if<std::string>(&b);
    if (sa && sb) {
        int c = sa->compare(*sb);
        return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    double x = to_number(a), y = to_number(b);
    return x < y ? -1 : (x > y ? 1 : 0);
}

struct RowContext {
    const UserRow* row = nullptr;
};

SqlValue eval(const Expr& e, const RowContext& ctx) {
    switch (e.kind) {
        case Expr::literal:
            return e.value;
        case Expr::column: {
            if (!ctx.row) throw SqlError("Unknown column '" + e.name + "' in 'field list'");
            if (e.name == "id") return ctx.row->id;
            if (e.name == "username") return ctx.row->username;
            if (e.name == "email") return ctx.row->email;
            if (e.name == "password") return ctx.row->password;
            throw SqlError("Unknown column '" + e.name + "' in 'where clause'");
        }
        case Expr::is_null: {
            bool n = is_null(eval(*e.args[0], ctx));
            return std::int64_t{(n != e.negated) ? 1 : 0};
        }
        case Expr::unary: {
            Truth t = truth_of(eval(*e.args[0], ctx));
            return from_truth(t ? Truth(!*t) : std::nullopt);
        }
        case Expr::func: {
            const auto& n = e.name;
            if (n == "version") return std::string("5.7.31-0ubuntu0.18.04.1");
            if (n == "database" || n == "schema") return std::string("webapp_prod");
            if (n == "user" || n == "current_user" || n == "system_user" || n == "session_user") {
                return std::string("webapp@localhost");
            }
            if (n == "concat") {
                std::string out;
                for (const auto& a : e.args) {
                    auto v = eval(*a, ctx);
                    if (is_null(v)) return SqlNull{};
                    out += render_sql_value(v);
                    if (out.size() > kSqlRenderLimit) throw SqlError("Result of concat() was larger than max_allowed_packet");
                }
                return out;
            }
            throw SqlError("FUNCTION webapp_prod." + n + " does not exist");
        }
        case Expr::binary:
            break;
    }

    const auto& op = e.name;
    if (op == "AND") {
        Truth a = truth_of(eval(*e.args[0], ctx));
        if (a && !*a) return std::int64_t{0};
        Truth b = truth_of(eval(*e.args[1], ctx));
        if (b && !*b) return std::int64_t{0};
        if (!a || !b) return SqlNull{};
        return std::int64_t{1};
    }
    if (op == "OR") {
        Truth a = truth_of(eval(*e.args[0], ctx));
        if (a && *a) return std::int64_t{1};
        Truth b = truth_of(eval(*e.args[1], ctx));
        if (b && *b) return std::int64_t{1};
        if (!a || !b) return SqlNull{};
        return std::int64_t{0};
    }
    SqlValue a = eval(*e.args[0], ctx);
    SqlValue b = eval(*e.args[1], ctx);
    if (op == "XOR") {
        Truth x = truth_of(a), y = truth_of(b);
        if (!x || !y) return SqlNull{};
        return std::int64_t{*x != *y ? 1 : 0};
    }
    if (is_null(a) || is_null(b)) return SqlNull{};
    if (op == "LIKE") return std::int64_t{like_match(render_sql_value(a), render_sql_value(b)) ? 1 : 0};
    if (op == "+" || op == "-" || op == "*" || op == "/") {
        auto ia = std::get_if<std::int64_t>(&a);
        auto ib = std::get_if<std::int64_t>(&b);
        if (ia && ib && op != "/") {
            std::int64_t r;
            bool overflow = op == "+"   ? __builtin_add_overflow(*ia, *ib, &r)
                            : op == "-" ? __builtin_sub_overflow(*ia, *ib, &r)
                                        : __builtin_mul_overflow(*ia, *ib, &r);
            if (overflow) throw SqlError("BIGINT value is out of range");
            return r;
        }
        double x = to_number(a), y = to_number(b);
        if (op == "+") return x + y;
        if (op == "-") return x - y;
        if (op == "*") return x * y;
        if (y == 0) return SqlNull{};
        return x / y;
    }
    int c = compare_values(a, b);
    bool r = op == "="    ? c == 0
             : op == "<>" ? c != 0
             : op == "<"  ? c < 0
             : op == ">"  ? c > 0
             : op == "<=" ? c <= 0
                          : c >= 0;
    return std::int64_t{r ? 1 : 0};
}

std::vector<SqlRow> execute_select(const Select& s, const DummyDatabase& db) {
    std::vector<const UserRow*> source;
    if (s.from_users) {
        for (const auto& u : db.users()) source.push_back(&u);
    } else {
        source.push_back(nullptr);  // FROM-less SELECT yields one row
    }

    struct Produced {
        SqlRow row;
        const UserRow* origin;
    };
    std::vector<Produced> produced;
    for (const auto* u : source) {
        RowContext ctx{u};
        if (s.where) {
            Truth t = truth_of(eval(*s.where, ctx));
            if (!t || !*t) continue;
        }
        SqlRow row;
        for (const auto& item : s.items) {
            if (item.star) {
                if (!u) throw SqlError("No tables used");
                row.push_back(u->id);
                row.push_back(u->username);
                row.push_back(u->email);
                row.push_back(u->password);
            } else {
                row.push_back(eval(*item.expr, ctx));
            }
        }
        produced.push_back({std::move(row), u});
    }

    if (!s.order.empty()) {
        // validate ORDER BY positions against the select list width
        std::size_t width = produced.empty() ? 0 : produced.front().row.size();
        for (const auto& k : s.order) {
            if (k.position && (*k.position == 0 || (width > 0 && *k.position > width))) {
                throw SqlError("Unknown column '" + std::to_string(*k.position) + "' in 'order clause'");
            }
        }
        auto key_of = [](const OrderKey& k, const Produced& p) -> SqlValue {
            if (k.position) return p.row[*k.position - 1];
            return eval(*k.expr, RowContext{p.origin});
        };
        std::stable_sort(produced.begin(), produced.end(), [&](const Produced& x, const Produced& y) {
            for (const auto& k : s.order) {
                auto a = key_of(k, x);
                auto b = key_of(k, y);
                if (is_null(a) != is_null(b)) return k.desc ? !is_null(a) : is_null(a);
                int c = compare_values(a, b);
                if (c != 0) return k.desc ? c > 0 : c < 0;
            }
            return false;
        });
    }

    std::vector<SqlRow> rows;
    for (auto& p : produced) rows.push_back(std::move(p.row));
    if (s.distinct) {
        std::vector<SqlRow> unique;
        for (auto& r : rows) {
            if (std::find(unique.begin(), unique.end(), r) == unique.end()) unique.push_back(std::move(r));
        }
        rows = std::move(unique);
    }
    if (s.offset > 0 || s.limit) {
        auto begin = std::min(rows.size(), static_cast<std::size_t>(std::max<std::int64_t>(0, s.offset)));
        auto end = rows.size();
        if (s.limit) end = std::min(end, begin + static_cast<std::size_t>(std::max<std::int64_t>(0, *s.limit)));
        rows = std::vector<SqlRow>(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(begin)),
                                   std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(end)));
    }
    return rows;
}

}  // namespace

SqlOutcome run_sql(std::string_view query, const DummyDatabase& db) {
    SqlOutcome outcome;
    try {
        Parser parser(query, lex(query));
        Compound c = parser.parse();
        std::vector<SqlRow> rows = execute_select(c.parts[0], db);
        for (std::size_t i = 1; i < c.parts.size(); ++i) {
            auto more = execute_select(c.parts[i], db);
            bool all = c.union_all[i - 1];
            for (auto& r : more) rows.push_back(std::move(r));
            if (!all) {
                // UNION DISTINCT removes duplicates across everything so far
                std::vector<SqlRow> unique;
                std::set<std::string> seen;
                for (auto& r : rows) {
                    std::string key;
                    for (const auto& v : r) key += std::to_string(v.index()) + ":" + render_sql_value(v) + "\x1f";
                    if (seen.insert(key).second) unique.push_back(std::move(r));
                }
                rows = std::move(unique);
            }
        }
        outcome.ok = true;
        for (const auto& r : rows) {
            std::string line;
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) line.push_back('|');
                line += render_sql_value(r[i]);
            }
            line.push_back('\n');
            if (outcome.rendered.size() + line.size() > kSqlRenderLimit) {
                outcome.truncated = true;
                break;
            }
            outcome.rendered += line;
        }
        outcome.rows = std::move(rows);
    } catch (const SqlError& e) {
        outcome.ok = false;
        outcome.rows.clear();
        outcome.rendered = e.what();
    }
    return outcome;
}

}  // namespace webtrap::sandbox
