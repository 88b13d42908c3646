#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace webtrap::sandbox {

// Read-only fake filesystem that emulations resolve paths against.
// Paths are absolute, '/'-separated, without trailing slash (root is "/").
class VirtualFilesystem {
public:
    enum class Kind { file, dir };

    struct Entry {
        Kind kind;
        std::string content;
    };

    // Builds a tree from (absolute path, content) pairs; parent directories
    // are created implicitly.
    static VirtualFilesystem from_files(const std::vector<std::pair<std::string, std::string>>& files);

    // The shipped fixture tree (fixtures/vfs).
    static const VirtualFilesystem& fixture();

    // Resolves path against cwd, collapsing "." and ".." segments. ".." at
    // the root stays at the root, so the result never escapes the tree.
    static std::string normalize(std::string_view path, std::string_view cwd = "/");

    const Entry* find(std::string_view absolute_path) const;
    bool is_dir(std::string_view absolute_path) const;
    std::optional<std::string> read_file(std::string_view path, std::string_view cwd = "/") const;

    // Sorted child names of a directory; empty if not a directory.
    std::vector<std::string> list(std::string_view absolute_dir) const;

    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Entry, std::less<>> entries_;
};

// Reads a PHP-style stream target: plain paths, file:// URIs and
// php://filter/.../resource=<path> (base64/rot13 filters).
std::optional<std::string> read_stream(std::string_view target, const VirtualFilesystem& vfs,
                                       std::string_view cwd = "/");

}  // namespace webtrap::sandbox
