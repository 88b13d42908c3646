#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace webtrap::fixtures {

// Files under fixtures/, compiled into the binary so that emulation never
// needs to touch the host filesystem.
struct EmbeddedFile {
    std::string_view path;  // relative to fixtures/, e.g. "vfs/etc/passwd"
    std::string_view content;
};

const std::vector<EmbeddedFile>& embedded_files();

std::optional<std::string_view> embedded_file(std::string_view path);

}  // namespace webtrap::fixtures
