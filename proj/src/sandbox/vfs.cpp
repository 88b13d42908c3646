#include "webtrap/sandbox/vfs.hpp"
#include <cctype>

#include "webtrap/sandbox/fixture_data.hpp"
#include "webtrap/util/codec.hpp"
#include "webtrap/util/strings.hpp"

namespace webtrap::fixtures {

std::optional<std::string_view> embedded_file(std::string_view path) {
    for (const auto& f : embedded_files()) {
        if (f.path == path) return f.content;
    }
    return std::nullopt;
}

}  // namespace webtrap::fixtures

namespace webtrap::sandbox {

namespace {

std::string parent_of(std::string_view path) {
    auto slash = path.rfind('/');
    if (slash == 0 || slash == std::string_view::npos) return "/";
    return std::string(path.substr(0, slash));
}

std::string rot13(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + (c - 'a' + 13) % 26);
        else if (c >= 'A' && c <= 'Z') c = static_cast<char>('A' + (c - 'A' + 13) % 26);
    }
    return out;
}

}  // namespace

VirtualFilesystem VirtualFilesystem::from_files(const std::vector<std::pair<std::string, std::string>>& files) {
    VirtualFilesystem vfs;
    vfs.entries_.emplace("/", Entry{Kind::dir, {}});
    for (const auto& [raw_path, content] : files) {
        auto path = normalize(raw_path);
        vfs.entries_.insert_or_assign(path, Entry{Kind::file, content});
        for (auto dir = parent_of(path); dir != "/"; dir = parent_of(dir)) {
            vfs.entries_.try_emplace(dir, Entry{Kind::dir, {}});
        }
    }
    return vfs;
}

const VirtualFilesystem& VirtualFilesystem::fixture() {
    static const VirtualFilesystem instance = [] {
        std::vector<std::pair<std::string, std::string>> files;
        constexpr std::string_view prefix = "vfs/";
        for (const auto& f : fixtures::embedded_files()) {
            if (f.path.substr(0, prefix.size()) == prefix) {
                files.emplace_back("/" + std::string(f.path.substr(prefix.size())), std::string(f.content));
            }
        }
        return from_files(files);
    }();
    return instance;
}

std::string VirtualFilesystem::normalize(std::string_view path, std::string_view cwd) {
    std::vector<std::string> segments;
    auto push_all = [&segments](std::string_view p) {
        for (auto& seg : util::split(p, '/')) {
            if (seg.empty() || seg == ".") continue;
            if (seg == "..") {
                if (!segments.empty()) segments.pop_back();
                continue;
            }
            segments.push_back(std::move(seg));
        }
    };
    if (path.empty() || path.front() != '/') push_all(cwd);
    push_all(path);

    std::string out;
    for (const auto& seg : segments) {
        out.push_back('/');
        out += seg;
    }
    return out.empty() ? "/" : out;
}

const VirtualFilesystem::Entry* VirtualFilesystem::find(std::string_view absolute_path) const {
    auto it = entries_.find(absolute_path);
    return it == entries_.end() ? nullptr : &it->second;
}

bool VirtualFilesystem::is_dir(std::string_view absolute_path) const {
    const auto* e = find(absolute_path);
    return e != nullptr && e->kind == Kind::dir;
}

std::optional<std::string> VirtualFilesystem::read_file(std::string_view path, std::string_view cwd) const {
    const auto* e = find(normalize(path, cwd));
    if (e == nullptr || e->kind != Kind::file) return std::nullopt;
    return e->content;
}

std::vector<std::string> VirtualFilesystem::list(std::string_view absolute_dir) const {
    std::vector<std::string> names;
    if (!is_dir(absolute_dir)) return names;
    std::string prefix(absolute_dir);
    if (prefix != "/") prefix.push_back('/');
    for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
        std::string_view key = it->first;
        if (key.substr(0, prefix.size()) != prefix) break;
        auto rest = key.substr(prefix.size());
        if (!rest.empty() && rest.find('/') == std::string_view::npos) names.emplace_back(rest);
    }
    return names;  // map order is already sorted
}

std::optional<std::string> read_stream(std::string_view target, const VirtualFilesystem& vfs, std::string_view cwd) {
    if (util::istarts_with(target, "file://")) {
        return vfs.read_file(target.substr(7), cwd);
    }
    if (util::istarts_with(target, "php://filter/")) {
        auto spec = target.substr(13);
        auto res = util::ifind(spec, "resource=");
        if (res == std::string_view::npos) return std::nullopt;
        auto filters = spec.substr(0, res);
        auto content = read_stream(spec.substr(res + 9), vfs, cwd);
        if (!content) return std::nullopt;
        for (const auto& filter : util::split(filters, '/')) {
            auto name = filter;
            if (util::istarts_with(name, "read=")) name = name.substr(5);
            if (util::iequals(name, "convert.base64-encode")) {
                *content = util::base64_encode(*content);
            } else if (util::iequals(name, "string.rot13")) {
                *content = rot13(*content);
            } else if (util::iequals(name, "string.toupper")) {
                for (char& c : *content) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            }
        }
        return content;
    }
    return vfs.read_file(target, cwd);
}

}  // namespace webtrap::sandbox
