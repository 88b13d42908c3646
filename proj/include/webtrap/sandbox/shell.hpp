#pragma once

#include <string>
#include <string_view>

#include "webtrap/sandbox/limits.hpp"
#include "webtrap/sandbox/vfs.hpp"

namespace webtrap::sandbox {

struct ShellResult {
    std::string output;  // stdout and stderr, interleaved as produced
    int exit_status = 0;
    bool truncated = false;  // output cap or deadline hit
};

// Simulated busybox-like shell. Supports ';', '&&', '||', '|', quoting,
// `...` / $(...) substitution, '<' and '>/dev/null' redirection, and the
// utilities cat, echo, ls, pwd, cd, id, whoami, uname, ping, head, tail.
// Runs as www-data in /var/www/html. Never touches the host.
ShellResult exec_shell(std::string_view command_line, const VirtualFilesystem& vfs,
                       const Deadline& deadline = Deadline{});

}  // namespace webtrap::sandbox
