#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "webtrap/sandbox/limits.hpp"

namespace webtrap::sandbox {

enum class TemplateEngine { tornado_style, mako_style };

std::string_view to_string(TemplateEngine engine);

// `{{...}}` selects tornado_style; `<%...%>` or `${...}` selects mako_style.
std::optional<TemplateEngine> detect_template_engine(std::string_view payload);

struct TemplateOutcome {
    bool ok = false;
    std::string rendered;
    std::string error;
};

// Renders payload as a template of the given engine. Expressions use a
// Python-flavoured subset: int/float arithmetic (+ - * / // % **), string
// literals, comparisons, True/False/None, and, for mako_style, `name = expr`
// statements inside <% %> blocks. Anything else is reported as an error.
TemplateOutcome eval_template(TemplateEngine engine, std::string_view payload, const Deadline& deadline = Deadline{});

// Python repr() of a float ("49.0", "0.1", "1e+16", "inf").
std::string python_float_repr(double value);

}  // namespace webtrap::sandbox
