#pragma once

#include <string_view>

namespace webtrap::emulators {

// Pattern matchers for each attack family. All operate on values that have
// been percent-decoded exactly once and are case-insensitive.

// A `<...>` tag carrying a script token: script, javascript:, vbscript:,
// iframe, svg, or an on<event>= handler.
bool scan_xss(std::string_view payload);

// `../` anywhere, a leading /etc|/proc|/var|/home|/usr directory, or a
// file:// / php://filter stream target.
bool scan_lfi(std::string_view payload);

// (http|https|ftp|ftps)://<non-space>.php|.txt followed by a word boundary.
bool scan_rfi(std::string_view payload);

// Unbalanced quote, UNION [ALL] SELECT, OR/AND <lit>=<lit> tautology, or a
// quote/paren followed by a -- or # comment terminator.
bool scan_sqli(std::string_view payload);

// {{...}}, <%...%> or ${...} with a non-empty body on one line.
bool scan_template(std::string_view payload);

// <!DOCTYPE ... [ together with <!ENTITY.
bool scan_xxe(std::string_view payload);

// Starts with a serialization type tag and parses under the full grammar.
bool scan_php_object(std::string_view payload);

// eval|system|passthru|exec followed by optional spaces and '('.
bool scan_php_code(std::string_view payload);

// Shell metacharacter (; | ` && $( or newline) followed by a known utility.
bool scan_cmd_exec(std::string_view payload);

}  // namespace webtrap::emulators
