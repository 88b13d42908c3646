#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace webtrap::cli {

// Exit statuses shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs `webtrap <command> ...`. serve and analyze block until SIGINT or
// SIGTERM, which the caller must have blocked in every thread beforehand
// (see block_shutdown_signals).
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

void block_shutdown_signals();

// $XDG_STATE_HOME/webtrap, else ~/.local/state/webtrap, else ./webtrap-logs
std::filesystem::path default_log_dir();

struct LogFiles {
    std::filesystem::path debug;
    std::filesystem::path error;
};

// Installs the default logger: everything at debug level goes to
// <dir>/<name>.log, errors also to <dir>/<name>.err, warnings to stderr.
LogFiles setup_logging(const std::filesystem::path& dir, const std::string& name);

// Table I rendering of one session report document.
std::string render_report(const std::string& report_json);
// One row per session.
std::string render_report_table(const std::vector<std::string>& report_jsons);

}  // namespace webtrap::cli
