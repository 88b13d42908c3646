#include "webtrap/cloner/cloner.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "webtrap/util/clock.hpp"
#include "webtrap/util/codec.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::cloner {

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view strip_fragment(std::string_view s) {
    auto hash = s.find('#');
    return hash == std::string_view::npos ? s : s.substr(0, hash);
}

// Scheme of an absolute reference, lowercased; empty when href is relative.
std::string scheme_of(std::string_view href) {
    if (href.empty() || !is_alpha(href[0])) return {};
    for (std::size_t i = 1; i < href.size(); ++i) {
        char c = href[i];
        if (c == ':') return util::to_lower(href.substr(0, i));
        if (!is_alpha(c) && !is_digit(c) && c != '+' && c != '-' && c != '.') return {};
    }
    return {};
}

std::string amp_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.compare(i, 5, "&amp;") == 0) {
            out += '&';
            i += 4;
        } else {
            out += s[i];
        }
    }
    return out;
}

std::string amp_encode(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string Origin::to_string() const {
    std::string out = scheme + "://" + (host.find(':') != std::string::npos ? "[" + host + "]" : host);
    int default_port = scheme == "https" ? 443 : 80;
    if (port != default_port) out += ":" + std::to_string(port);
    return out;
}

std::optional<std::pair<Origin, std::string>> parse_url(std::string_view url) {
    url = util::trim(url);
    auto sep = url.find("://");
    if (sep == std::string_view::npos) return std::nullopt;
    Origin o;
    o.scheme = util::to_lower(url.substr(0, sep));
    if (o.scheme != "http" && o.scheme != "https") return std::nullopt;
    o.port = o.scheme == "https" ? 443 : 80;
    auto rest = url.substr(sep + 3);
    auto end = rest.find_first_of("/?#");
    auto authority = rest.substr(0, end);
    auto target = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
    if (auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
    std::string_view host = authority;
    std::string_view port;
    if (!authority.empty() && authority.front() == '[') {
        auto close = authority.find(']');
        if (close == std::string_view::npos) return std::nullopt;
        host = authority.substr(1, close - 1);
        if (close + 1 < authority.size()) {
            if (authority[close + 1] != ':') return std::nullopt;
            port = authority.substr(close + 2);
        }
    } else if (auto colon = authority.rfind(':'); colon != std::string_view::npos) {
        host = authority.substr(0, colon);
        port = authority.substr(colon + 1);
    }
    if (host.empty()) return std::nullopt;
    o.host = util::to_lower(host);
    if (!port.empty()) {
        int p = 0;
        for (char c : port) {
            if (!is_digit(c) || p > 65535) return std::nullopt;
            p = p * 10 + (c - '0');
        }
        if (p <= 0 || p > 65535) return std::nullopt;
        o.port = p;
    }
    std::string path(strip_fragment(target));
    if (path.empty() || path.front() == '?') path.insert(0, "/");
    return std::make_pair(o, path);
}

std::string remove_dot_segments(std::string_view path) {
    std::string in(path);
    std::string out;
    while (!in.empty()) {
        if (in.rfind("../", 0) == 0) {
            in.erase(0, 3);
        } else if (in.rfind("./", 0) == 0) {
            in.erase(0, 2);
        } else if (in.rfind("/./", 0) == 0) {
            in.replace(0, 3, "/");
        } else if (in == "/.") {
            in = "/";
        } else if (in.rfind("/../", 0) == 0 || in == "/..") {
            in = in.size() == 3 ? "/" : in.substr(3);
            auto slash = out.rfind('/');
            out.erase(slash == std::string::npos ? 0 : slash);
        } else if (in == "." || in == "..") {
            in.clear();
        } else {
            auto next = in.find('/', in.front() == '/' ? 1 : 0);
            out += in.substr(0, next);
            in.erase(0, next == std::string::npos ? in.size() : next);
        }
    }
    return out;
}

std::optional<std::string> resolve_relative(std::string_view base_path, std::string_view href, const Origin* origin) {
    href = strip_fragment(util::trim(href));
    std::string_view base = base_path.substr(0, base_path.find('?'));
    if (base.empty()) base = "/";
    if (href.empty()) return std::string(base_path);

    std::string ref;
    auto scheme = scheme_of(href);
    if (!scheme.empty()) {
        if (scheme != "http" && scheme != "https") return std::nullopt;
        auto parsed = parse_url(href);
        if (!parsed || !origin || !(parsed->first == *origin)) return std::nullopt;
        ref = parsed->second;
    } else if (href.rfind("//", 0) == 0) {
        if (!origin) return std::nullopt;
        auto parsed = parse_url(origin->scheme + ":" + std::string(href));
        if (!parsed || !(parsed->first == *origin)) return std::nullopt;
        ref = parsed->second;
    } else {
        ref = std::string(href);
    }

    auto q = ref.find('?');
    std::string ref_path = ref.substr(0, q);
    std::string query = q == std::string::npos ? "" : ref.substr(q);
    std::string path;
    if (ref_path.empty()) {
        path = std::string(base);
    } else if (ref_path.front() == '/') {
        path = remove_dot_segments(ref_path);
    } else {
        std::string dir(base);
        auto slash = dir.rfind('/');
        std::string_view last = std::string_view(dir).substr(slash + 1);
        if (last.find('.') != std::string_view::npos) dir.erase(slash + 1);
        else if (dir.back() != '/') dir += '/';
        path = remove_dot_segments(dir + ref_path);
    }
    if (path.empty() || path.front() != '/') path.insert(0, "/");
    return path + query;
}

std::string md5_file_name(std::string_view original_path) { return util::md5_hex(original_path); }

bool is_html(std::string_view content_type) {
    return util::icontains(content_type, "text/html") || util::icontains(content_type, "application/xhtml");
}

std::vector<LinkRef> scan_links(std::string_view html) {
    static const std::map<std::string, std::pair<std::string, bool>, std::less<>> kAttrs = {
        {"a", {"href", true}},       {"area", {"href", true}},   {"link", {"href", false}},
        {"img", {"src", false}},     {"script", {"src", false}}, {"iframe", {"src", false}},
        {"frame", {"src", false}},   {"source", {"src", false}}, {"embed", {"src", false}},
        {"input", {"src", false}},   {"form", {"action", false}},
    };
    std::vector<LinkRef> out;
    const std::size_t n = html.size();
    std::size_t i = 0;
    while (i < n) {
        if (html[i] != '<') {
            ++i;
            continue;
        }
        if (html.compare(i, 4, "<!--") == 0) {
            auto end = html.find("-->", i + 4);
            i = end == std::string_view::npos ? n : end + 3;
            continue;
        }
        std::size_t j = i + 1;
        if (j < n && (html[j] == '!' || html[j] == '?' || html[j] == '/')) {
            auto end = html.find('>', j);
            i = end == std::string_view::npos ? n : end + 1;
            continue;
        }
        std::size_t name_start = j;
        while (j < n && (is_alpha(html[j]) || is_digit(html[j]))) ++j;
        if (j == name_start) {
            ++i;
            continue;
        }
        std::string tag = util::to_lower(html.substr(name_start, j - name_start));
        auto wanted = kAttrs.find(tag);
        // attributes
        while (j < n && html[j] != '>') {
            if (util::is_space(html[j]) || html[j] == '/') {
                ++j;
                continue;
            }
            std::size_t an = j;
            while (j < n && !util::is_space(html[j]) && html[j] != '=' && html[j] != '>' && html[j] != '/') ++j;
            std::string attr = util::to_lower(html.substr(an, j - an));
            while (j < n && util::is_space(html[j])) ++j;
            if (j >= n || html[j] != '=') continue;
            ++j;
            while (j < n && util::is_space(html[j])) ++j;
            std::size_t vs = j, ve = j;
            if (j < n && (html[j] == '"' || html[j] == '\'')) {
                char quote = html[j];
                vs = j + 1;
                auto close = html.find(quote, vs);
                ve = close == std::string_view::npos ? n : close;
                j = ve == n ? n : ve + 1;
            } else {
                while (j < n && !util::is_space(html[j]) && html[j] != '>') ++j;
                ve = j;
            }
            if (wanted != kAttrs.end() && attr == wanted->second.first) {
                out.push_back({tag, attr, amp_decode(html.substr(vs, ve - vs)), vs, ve - vs, wanted->second.second});
            }
        }
        i = j < n ? j + 1 : n;
        if (tag == "script" || tag == "style") {
            auto close = util::ifind(html, "</" + tag, i);
            i = close == std::string_view::npos ? n : close;
        }
    }
    return out;
}

std::string rewrite_links(std::string_view html, std::string_view base_path, const CloneManifest& manifest) {
    auto root = parse_url(manifest.root_url);
    const Origin* origin = root ? &root->first : nullptr;
    std::string out;
    std::size_t pos = 0;
    for (const auto& link : scan_links(html)) {
        auto resolved = resolve_relative(base_path, link.value, origin);
        if (!resolved || !manifest.find(*resolved) || *resolved == link.value) continue;
        out.append(html.substr(pos, link.offset - pos));
        out += amp_encode(*resolved);
        pos = link.offset + link.length;
    }
    if (pos == 0) return std::string(html);
    out.append(html.substr(pos));
    return out;
}

json CloneManifest::to_json() const {
    json pages_json = json::object();
    for (const auto& [path, rec] : pages) {
        pages_json[path] = {
            {"file_name", rec.file_name},
            {"content_type", rec.content_type},
            {"fetch_status", rec.fetch_status},
            {"link_targets", rec.link_targets},
        };
    }
    return {{"root_url", root_url}, {"max_depth", max_depth}, {"created_at", created_at}, {"pages", pages_json}};
}

CloneManifest CloneManifest::from_json(const json& j) {
    try {
        CloneManifest m;
        m.root_url = j.at("root_url").get<std::string>();
        m.max_depth = j.at("max_depth").get<int>();
        m.created_at = j.value("created_at", "");
        for (const auto& [path, rec] : j.at("pages").items()) {
            PageRecord r;
            r.original_path = path;
            r.file_name = rec.at("file_name").get<std::string>();
            r.content_type = rec.value("content_type", "application/octet-stream");
            r.fetch_status = rec.value("fetch_status", 200);
            r.link_targets = rec.value("link_targets", std::vector<std::string>{});
            if (r.file_name.size() != 32 || r.file_name.find_first_not_of("0123456789abcdef") != std::string::npos) {
                throw CloneError("page " + path + " has an invalid file_name");
            }
            m.pages.emplace(path, std::move(r));
        }
        return m;
    } catch (const json::exception& e) {
        throw CloneError(std::string("malformed manifest: ") + e.what());
    }
}

CloneManifest CloneManifest::load(const std::filesystem::path& dir) {
    auto path = dir / "meta.json";
    std::ifstream in(path);
    if (!in) throw CloneError("cannot open " + path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw CloneError(path.string() + " is not valid JSON");
    return from_json(doc);
}

void CloneManifest::save(const std::filesystem::path& dir) const {
    auto path = dir / "meta.json";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CloneError("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

const PageRecord* CloneManifest::find(std::string_view path) const {
    auto it = pages.find(std::string(path));
    return it == pages.end() ? nullptr : &it->second;
}

namespace {

struct Item {
    std::string path;
    int depth = 0;
    bool parse = true;  // assets are stored, never parsed
};

struct Fetched {
    int status = 0;
    bool reached = false;
    std::string error;
    std::string content_type = "application/octet-stream";
    std::string location;
    std::string body;
};

std::unique_ptr<httplib::Client> make_client(const Origin& origin, double timeout) {
    auto client = std::make_unique<httplib::Client>(origin.to_string());
    auto secs = static_cast<time_t>(timeout);
    auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_follow_location(false);
    client->set_default_headers({{"User-Agent", "Mozilla/5.0 (X11; Linux x86_64; rv:109.0) Gecko/20100101 Firefox/115.0"}});
    return client;
}

Fetched fetch(httplib::Client& client, const std::string& path) {
    Fetched f;
    auto res = client.Get(path);
    if (!res) {
        f.status = 502;
        f.error = httplib::to_string(res.error());
        return f;
    }
    f.reached = true;
    f.status = res->status;
    if (res->has_header("Content-Type")) f.content_type = res->get_header_value("Content-Type");
    if (res->has_header("Location")) f.location = res->get_header_value("Location");
    f.body = std::move(res->body);
    return f;
}

}  // namespace

CloneManifest clone_site(const std::string& root_url, const std::filesystem::path& output_dir,
                         const CloneOptions& options) {
    auto parsed = parse_url(root_url);
    if (!parsed) throw CloneError("not an absolute http(s) URL: " + root_url);
    if (options.max_depth < 0) throw CloneError("max_depth must be non-negative");
    const Origin origin = parsed->first;
    std::error_code ec;
    std::filesystem::create_directories(output_dir, ec);
    if (ec) throw CloneError("cannot create " + output_dir.string() + ": " + ec.message());

    CloneManifest manifest;
    manifest.root_url = root_url;
    manifest.max_depth = options.max_depth;
    manifest.created_at = util::iso8601_utc(util::unix_now());

    std::map<std::string, std::string> bodies;
    std::set<std::string> visited{parsed->second};
    std::vector<Item> level{{parsed->second, 0, true}};
    bool root_level = true;

    while (!level.empty()) {
        std::vector<Fetched> results(level.size());
        std::atomic<std::size_t> next_index{0};
        auto worker = [&] {
            auto client = make_client(origin, options.timeout_seconds);
            for (std::size_t i; (i = next_index.fetch_add(1)) < level.size();) {
                results[i] = fetch(*client, level[i].path);
            }
        };
        std::size_t workers = std::clamp<std::size_t>(options.concurrency, 1, level.size());
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        if (root_level && !results[0].reached) {
            throw CloneError("cannot reach " + root_url + ": " + results[0].error);
        }
        root_level = false;

        std::vector<Item> next;
        for (std::size_t i = 0; i < level.size(); ++i) {
            const auto& item = level[i];
            auto& r = results[i];
            if (!r.reached) spdlog::warn("fetch {} failed: {}", item.path, r.error);

            PageRecord rec;
            rec.original_path = item.path;
            rec.file_name = md5_file_name(item.path);
            rec.content_type = r.content_type;
            rec.fetch_status = r.status;

            std::vector<std::pair<std::string, bool>> refs;
            if (r.reached && item.parse && is_html(r.content_type)) {
                for (auto& link : scan_links(r.body)) refs.emplace_back(std::move(link.value), link.follow);
            }
            if (!r.location.empty() && r.status >= 300 && r.status < 400) refs.emplace_back(r.location, true);
            for (const auto& [href, follow] : refs) {
                auto target = resolve_relative(item.path, href, &origin);
                if (!target) continue;
                if (std::find(rec.link_targets.begin(), rec.link_targets.end(), *target) == rec.link_targets.end()) {
                    rec.link_targets.push_back(*target);
                }
                if (follow && item.depth >= options.max_depth) continue;
                if (visited.insert(*target).second) next.push_back({*target, item.depth + 1, follow});
            }
            bodies[item.path] = std::move(r.body);
            manifest.pages[item.path] = std::move(rec);
        }
        level = std::move(next);
    }

    std::map<std::string, std::string> names;
    for (const auto& [path, rec] : manifest.pages) {
        auto [it, fresh] = names.emplace(rec.file_name, path);
        if (!fresh) throw CloneError("md5 collision between " + it->second + " and " + path);
    }
    for (const auto& [path, rec] : manifest.pages) {
        const auto& body = bodies[path];
        std::string data = is_html(rec.content_type) ? rewrite_links(body, path, manifest) : body;
        std::ofstream out(output_dir / rec.file_name, std::ios::binary | std::ios::trunc);
        if (!out) throw CloneError("cannot write " + (output_dir / rec.file_name).string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
    }
    manifest.save(output_dir);
    spdlog::info("cloned {} pages from {} into {}", manifest.pages.size(), root_url, output_dir.string());
    return manifest;
}

}  // namespace webtrap::cloner
