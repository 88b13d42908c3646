#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace webtrap::sandbox {

struct UserRow {
    std::int64_t id;
    std::string username;
    std::string email;
    std::string password;
};

// The seeded `users(id, username, email, password)` table. Rows depend only
// on the seed (std::mt19937 output is fixed by the standard).
class DummyDatabase {
public:
    static constexpr std::uint32_t kDefaultSeed = 1337;
    static constexpr std::size_t kDefaultRows = 100;

    explicit DummyDatabase(std::uint32_t seed = kDefaultSeed, std::size_t rows = kDefaultRows);

    std::uint32_t seed() const { return seed_; }
    const std::vector<UserRow>& users() const { return users_; }

private:
    std::uint32_t seed_;
    std::vector<UserRow> users_;
};

struct SqlNull {
    bool operator==(const SqlNull&) const = default;
};
using SqlValue = std::variant<SqlNull, std::int64_t, double, std::string>;
using SqlRow = std::vector<SqlValue>;

struct SqlOutcome {
    bool ok = false;
    std::vector<SqlRow> rows;
    std::string rendered;  // pipe-separated rows, or the error text
    bool truncated = false;
};

// Evaluates one statement of the supported MySQL-flavoured subset against
// the dummy database:
//   SELECT [DISTINCT] (* | expr [[AS] alias], ...) [FROM users [alias]]
//     [WHERE expr] [ORDER BY expr|n [ASC|DESC], ...] [LIMIT n [OFFSET m] | LIMIT m, n]
//   { UNION [ALL] SELECT ... }
// Expressions: literals, columns, = <> != < > <= >=, LIKE, IS [NOT] NULL,
// AND/OR/NOT (and && / ||), + - * /, and version(), database(), user(),
// current_user(), concat(...). Comments (--, #, /* */) are stripped.
// Errors yield fixed honeypot strings such as "SQL syntax error near '<token>'".
SqlOutcome run_sql(std::string_view query, const DummyDatabase& db);

std::string render_sql_value(const SqlValue& v);

}  // namespace webtrap::sandbox
