#pragma once

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace webtrap::cloner {

using json = nlohmann::json;

class CloneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PageRecord {
    std::string original_path;  // path+query, fragment stripped
    std::string file_name;      // md5 hex of original_path
    std::string content_type;
    int fetch_status = 0;
    std::vector<std::string> link_targets;

    bool operator==(const PageRecord&) const = default;
};

struct CloneManifest {
    std::string root_url;
    std::map<std::string, PageRecord> pages;
    int max_depth = 3;
    std::string created_at;

    json to_json() const;
    static CloneManifest from_json(const json& j);
    // Reads <dir>/meta.json. Throws CloneError.
    static CloneManifest load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    const PageRecord* find(std::string_view path) const;
};

struct Origin {
    std::string scheme;  // http | https
    std::string host;    // lowercase
    int port = 80;

    bool operator==(const Origin&) const = default;
    std::string to_string() const;  // scheme://host[:port]
};

// Splits an absolute http(s) URL into origin and path+query (fragment
// dropped, "/" when empty).
std::optional<std::pair<Origin, std::string>> parse_url(std::string_view url);

// Resolves href found on the page at base_path. A base whose last segment
// has no '.' is a directory, so "/foo" + "bar" is "/foo/bar". nullopt for
// off-host URLs (any absolute URL when origin is null) and for
// mailto:, javascript:, data: and tel: links.
std::optional<std::string> resolve_relative(std::string_view base_path, std::string_view href,
                                            const Origin* origin = nullptr);

// RFC 3986 remove_dot_segments.
std::string remove_dot_segments(std::string_view path);

std::string md5_file_name(std::string_view original_path);

struct LinkRef {
    std::string tag;
    std::string attribute;
    std::string value;  // &amp; decoded
    std::size_t offset = 0;  // raw value span in the document
    std::size_t length = 0;
    bool follow = false;  // navigational (a/area href) rather than asset or form action
};

// href/src/action attributes of a, area, link, img, script, iframe, frame,
// source, embed, input and form tags. Comments and script/style bodies are
// skipped.
std::vector<LinkRef> scan_links(std::string_view html);

// Rewrites internal references on the page at base_path to the absolute
// manifest path they denote; everything else is left byte-identical.
std::string rewrite_links(std::string_view html, std::string_view base_path, const CloneManifest& manifest);

struct CloneOptions {
    int max_depth = 3;
    std::size_t concurrency = 10;
    double timeout_seconds = 10;
};

// Breadth-first crawl of root_url's host. Pages go to <output_dir>/<md5>,
// the manifest to <output_dir>/meta.json. Throws CloneError when the root is
// unreachable or two paths hash to the same name.
CloneManifest clone_site(const std::string& root_url, const std::filesystem::path& output_dir,
                         const CloneOptions& options = {});

bool is_html(std::string_view content_type);

}  // namespace webtrap::cloner
