#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "webtrap/sandbox/vfs.hpp"

namespace webtrap::sandbox {

// One attempted dereference of a remote SYSTEM identifier.
struct XmlExchange {
    std::string original_uri;   // as written in the document
    std::string requested_url;  // after rewriting to the collector (empty when not sent)
    bool delivered = false;
    std::string response_body;
};

struct XmlOutcome {
    bool ok = false;
    std::string text;   // root element with entity references expanded
    std::string error;  // parser error text when !ok
    std::vector<XmlExchange> exchanges;
};

// Performs an HTTP GET of url and returns the body, or nullopt on failure.
using HttpGetter = std::function<std::optional<std::string>(const std::string& url)>;

// Default getter: plain HTTP via cpp-httplib with a 2 s timeout.
HttpGetter default_http_getter();

// Expands a document's DTD the way a vulnerable libxml configuration would:
// internal entities inline, file:// and php://filter SYSTEM entities from the
// virtual filesystem, parameter entities spliced into the DTD. Remote SYSTEM
// identifiers are only dereferenced when collector ("host:port") is set; the
// URI's host is then replaced by the collector. Expansion is bounded by
// kXmlDepthLimit nesting and kXmlExpansionLimit output bytes.
XmlOutcome resolve_xml(std::string_view document, const VirtualFilesystem& vfs,
                       const std::optional<std::string>& collector, const HttpGetter& http_get = default_http_getter());

// Rewrites scheme://host[:port]/rest to http://<collector>/rest.
std::string rewrite_to_collector(std::string_view uri, std::string_view collector);

}  // namespace webtrap::sandbox
