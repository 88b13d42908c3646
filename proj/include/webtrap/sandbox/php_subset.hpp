#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "webtrap/sandbox/limits.hpp"

namespace webtrap::sandbox {

// Hooks the interpreter uses for anything that would leave the process.
struct PhpHost {
    // Runs a shell command line, returns its combined output.
    std::function<std::string(std::string_view)> shell;
    // Reads a path or stream wrapper target; nullopt when absent.
    std::function<std::optional<std::string>(std::string_view)> read_file;
};

using PhpScalar = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

std::string php_to_string(const PhpScalar& value);

struct PhpRunResult {
    bool ok = false;
    std::string output;
    std::string error;
    bool truncated = false;
    std::map<std::string, PhpScalar> variables;
};

// Interprets a statement list of the supported PHP subset: echo/print,
// $var = / .= / += expr, expression statements. Expressions cover string
// and number literals (with "$var" interpolation), variables, `.`, + - * / %,
// comparisons, ! && ||, parentheses, backticks and a fixed set of built-in
// functions (system, passthru, exec, shell_exec, phpversion, strlen,
// strtoupper, strtolower, strrev, str_repeat, base64_encode, base64_decode,
// md5, file_get_contents, phpinfo).
PhpRunResult run_php_code(std::string_view code, const PhpHost& host, const Deadline& deadline = Deadline{});

// Like run_php_code but for a whole file: text outside <?php ... ?> is
// emitted verbatim.
PhpRunResult run_php_source(std::string_view source, const PhpHost& host, const Deadline& deadline = Deadline{});

}  // namespace webtrap::sandbox
