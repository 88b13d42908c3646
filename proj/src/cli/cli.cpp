#include "webtrap/cli/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>
#include <signal.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "webtrap/analysis/config.hpp"
#include "webtrap/analysis/core.hpp"
#include "webtrap/analysis/server.hpp"
#include "webtrap/cloner/cloner.hpp"
#include "webtrap/store/store.hpp"
#include "webtrap/surface/surface.hpp"
#include "webtrap/util/uuid.hpp"

namespace webtrap::cli {

using json = nlohmann::json;

namespace {

constexpr const char* kEnvServeListen = "WEBTRAP_SERVE_LISTEN";
constexpr const char* kEnvTanner = "WEBTRAP_TANNER";
constexpr const char* kEnvAnalyzeListen = "WEBTRAP_ANALYZE_LISTEN";

// flag, then environment, then the default
std::string pick(const std::string& flag, const char* env, const std::string& fallback) {
    if (!flag.empty()) return flag;
    if (const char* v = std::getenv(env); v && *v) return v;
    return fallback;
}

int wait_for_shutdown() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
    return sig;
}

void print_banner(std::ostream& out, const LogFiles& logs, const std::string& host, int port) {
    out << "Debug logs will be stored in " << logs.debug.string() << "\n";
    out << "Error logs will be stored in " << logs.error.string() << "\n";
    out << "======== Running on http://" << host << ":" << port << " ========\n";
    out << "(Press CTRL+C to quit)" << std::endl;
}

int run_clone(const std::string& target, int max_depth, const std::string& path, std::size_t concurrency,
              std::ostream& out, std::ostream& err) {
    cloner::CloneOptions opts;
    opts.max_depth = max_depth;
    opts.concurrency = concurrency;
    spdlog::set_level(spdlog::level::warn);  // the summary below covers it
    try {
        auto manifest = cloner::clone_site(target, path, opts);
        for (const auto& [p, rec] : manifest.pages) {
            out << std::setw(4) << rec.fetch_status << "  " << rec.file_name << "  " << p << "\n";
        }
        out << "cloned " << manifest.pages.size() << " pages from " << target << " into " << path << std::endl;
        return kExitOk;
    } catch (const std::exception& e) {
        err << "clone failed: " << e.what() << std::endl;
        return kExitFailure;
    }
}

int run_serve(const std::string& page_dir, const std::string& tanner_flag, const std::string& listen_flag,
              const std::string& log_dir, std::ostream& out, std::ostream& err) {
    surface::SurfaceConfig cfg;
    cfg.page_dir = page_dir;
    try {
        auto [th, tp] = analysis::split_host_port(pick(tanner_flag, kEnvTanner, "127.0.0.1:8090"), 8090);
        auto [lh, lp] = analysis::split_host_port(pick(listen_flag, kEnvServeListen, "0.0.0.0:8080"), 8080);
        cfg.tanner_host = th;
        cfg.tanner_port = tp;
        cfg.listen_host = lh;
        cfg.listen_port = lp;
    } catch (const std::invalid_argument& e) {
        err << e.what() << std::endl;
        return kExitUsage;
    }

    std::unique_ptr<surface::SurfaceHandler> handler;
    try {
        auto sender = surface::http_event_sender(cfg.tanner_host, cfg.tanner_port, cfg.forward_timeout);
        handler = surface::SurfaceHandler::from_page_dir(cfg, std::move(sender));
    } catch (const std::exception& e) {
        err << "cannot load pages from " << page_dir << ": " << e.what() << std::endl;
        return kExitFailure;
    }
    LogFiles logs;
    try {
        logs = setup_logging(log_dir.empty() ? default_log_dir() : std::filesystem::path(log_dir), "surface");
    } catch (const std::exception& e) {
        err << "cannot open log files: " << e.what() << std::endl;
        return kExitFailure;
    }

    surface::SurfaceServer server(*handler);
    int port = 0;
    try {
        port = server.start(cfg.listen_host, cfg.listen_port);
    } catch (const std::exception& e) {
        err << e.what() << std::endl;
        return kExitFailure;
    }
    auto instance = util::make_uuid_v4();
    out << "serving with uuid " << instance << "\n";
    out << "serving " << handler->manifest().pages.size() << " pages from " << page_dir << ", events go to "
        << cfg.tanner_host << ":" << cfg.tanner_port << "\n";
    print_banner(out, logs, cfg.listen_host, port);
    spdlog::info("surface {} listening on {}:{}", instance, cfg.listen_host, port);

    int sig = wait_for_shutdown();
    spdlog::info("signal {} received, shutting down", sig);
    server.stop();
    spdlog::info("surface stopped; {} forwarding failures", handler->forwarding_failures());
    spdlog::default_logger()->flush();
    out << "stopped" << std::endl;
    return kExitOk;
}

int run_analyze(const std::string& listen_flag, const std::string& config_path, const std::string& log_dir,
                std::ostream& out, std::ostream& err) {
    analysis::AnalysisConfig config;
    try {
        if (!config_path.empty()) config = analysis::load_config(config_path);
    } catch (const analysis::ConfigError& e) {
        err << "config error: " << e.what() << std::endl;
        return kExitFailure;
    }
    std::string host;
    int port = 0;
    try {
        std::tie(host, port) = analysis::split_host_port(pick(listen_flag, kEnvAnalyzeListen, "127.0.0.1:8090"), 8090);
    } catch (const std::invalid_argument& e) {
        err << e.what() << std::endl;
        return kExitUsage;
    }
    LogFiles logs;
    try {
        logs = setup_logging(log_dir.empty() ? default_log_dir() : std::filesystem::path(log_dir), "analysis");
    } catch (const std::exception& e) {
        err << "cannot open log files: " << e.what() << std::endl;
        return kExitFailure;
    }

    analysis::AnalysisCore::Options opts;
    try {
        if (config.store_backend == "redis") {
            auto [rh, rp] = analysis::split_host_port(config.redis_address, 6379);
            opts.store = std::make_shared<store::RedisStore>(rh, rp);
        } else {
            opts.store = std::make_shared<store::EmbeddedStore>(config.snapshot);
        }
        if (config.known_bots) opts.known_bots = detection::KnownBots::load(config.known_bots->string());
    } catch (const std::exception& e) {
        err << "startup failed: " << e.what() << std::endl;
        return kExitFailure;
    }
    opts.config = config;
    auto core = std::make_unique<analysis::AnalysisCore>(std::move(opts));

    std::optional<analysis::OobCollector> collector;
    analysis::AnalysisServer server(*core);
    try {
        if (config.xxe_oob_enabled) {
            auto [ch, cp] = analysis::split_host_port(config.xxe_collector, 8091);
            collector.emplace();
            collector->start(ch, cp);
            out << "OOB collector listening on " << ch << ":" << collector->port() << "\n";
        }
        port = server.start(host, port);
    } catch (const std::exception& e) {
        err << e.what() << std::endl;
        return kExitFailure;
    }
    core->start_sweeper();
    out << "sandbox backend: " << sandbox::to_string(core->sandbox().config().backend) << ", store: " << config.store_backend
        << "\n";
    print_banner(out, logs, host, port);
    spdlog::info("analysis listening on {}:{}", host, port);

    int sig = wait_for_shutdown();
    spdlog::info("signal {} received, shutting down", sig);
    server.stop();
    if (collector) collector->stop();
    core->stop_sweeper();
    try {
        core->store().put_stats(core->stats_summary());
    } catch (const std::exception& e) {
        spdlog::error("stats update on shutdown failed: {}", e.what());
    }
    try {
        core->store().flush();
    } catch (const std::exception& e) {
        spdlog::error("store flush on shutdown failed: {}", e.what());
    }
    core.reset();
    spdlog::default_logger()->flush();
    out << "stopped" << std::endl;
    return kExitOk;
}

int run_report(const std::string& session, bool all, bool raw_json, const std::string& tanner_flag,
               std::ostream& out, std::ostream& err) {
    std::string host;
    int port = 0;
    try {
        std::tie(host, port) = analysis::split_host_port(pick(tanner_flag, kEnvTanner, "127.0.0.1:8090"), 8090);
    } catch (const std::invalid_argument& e) {
        err << e.what() << std::endl;
        return kExitUsage;
    }
    httplib::Client client(host, port);
    client.set_connection_timeout(std::chrono::seconds(5));
    client.set_read_timeout(std::chrono::seconds(30));

    auto fetch_report = [&](const std::string& uuid, std::string& body) -> int {
        auto res = client.Get("/session/" + uuid);
        if (!res) {
            err << "cannot reach analysis service at " << host << ":" << port << ": " << httplib::to_string(res.error())
                << std::endl;
            return kExitFailure;
        }
        if (res->status == 404) {
            err << "session " << uuid << " not found" << std::endl;
            return kExitFailure;
        }
        if (res->status != 200) {
            err << "analysis service answered " << res->status << std::endl;
            return kExitFailure;
        }
        body = res->body;
        return kExitOk;
    };

    if (!all) {
        std::string body;
        if (int rc = fetch_report(session, body); rc != kExitOk) return rc;
        out << (raw_json ? json::parse(body).dump(2) + "\n" : render_report(body)) << std::flush;
        return kExitOk;
    }
    auto res = client.Get("/sessions");
    if (!res || res->status != 200) {
        err << "cannot list sessions at " << host << ":" << port << std::endl;
        return kExitFailure;
    }
    auto listing = json::parse(res->body, nullptr, false);
    if (listing.is_discarded() || !listing.contains("sessions")) {
        err << "malformed session listing" << std::endl;
        return kExitFailure;
    }
    std::vector<std::string> reports;
    for (const auto& uuid : listing["sessions"]) {
        std::string body;
        if (int rc = fetch_report(uuid.get<std::string>(), body); rc != kExitOk) return rc;
        reports.push_back(std::move(body));
    }
    if (raw_json) {
        json arr = json::array();
        for (const auto& r : reports) arr.push_back(json::parse(r));
        out << arr.dump(2) << std::endl;
    } else {
        out << render_report_table(reports);
        out << reports.size() << " sessions" << std::endl;
    }
    return kExitOk;
}

std::string join_strings(const json& arr) {
    std::string out;
    for (const auto& v : arr) {
        if (!out.empty()) out += ", ";
        out += v.is_string() ? v.get<std::string>() : v.dump();
    }
    return out.empty() ? "-" : out;
}

std::string owners_text(const json& owners) {
    std::ostringstream ss;
    bool first = true;
    for (const char* k : {"user", "crawler", "tool", "attacker"}) {
        if (!first) ss << ", ";
        first = false;
        ss << k << ": " << owners.value(k, 0.0);
    }
    return ss.str();
}

}  // namespace

std::filesystem::path default_log_dir() {
    if (const char* xdg = std::getenv("XDG_STATE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "webtrap";
    if (const char* home = std::getenv("HOME"); home && *home) {
        return std::filesystem::path(home) / ".local" / "state" / "webtrap";
    }
    return "webtrap-logs";
}

LogFiles setup_logging(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    LogFiles files{dir / (name + ".log"), dir / (name + ".err")};
    auto debug = std::make_shared<spdlog::sinks::basic_file_sink_mt>(files.debug.string());
    debug->set_level(spdlog::level::debug);
    auto error = std::make_shared<spdlog::sinks::basic_file_sink_mt>(files.error.string());
    error->set_level(spdlog::level::err);
    auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    console->set_level(spdlog::level::warn);
    auto logger = std::make_shared<spdlog::logger>(name, spdlog::sinks_init_list{debug, error, console});
    logger->set_level(spdlog::level::debug);
    logger->flush_on(spdlog::level::info);
    spdlog::set_default_logger(logger);
    return files;
}

std::string render_report(const std::string& report_json) {
    auto r = json::parse(report_json);
    std::vector<std::pair<std::string, std::string>> rows = {
        {"UUID", r.value("UUID", "")},
        {"IP address", r.value("IP address", "")},
        {"Location", join_strings(r.value("Location", json::array()))},
        {"Port", std::to_string(r.value("Port", 0))},
        {"User Agents", join_strings(r.value("User Agents", json::array()))},
        {"Attack Types", join_strings(r.value("Attack Types", json::array()))},
        {"Possible owners", owners_text(r.value("Possible owners", json::object()))},
        {"Start time", r.value("Start time", "")},
        {"End time", r.value("End time", "")},
        {"Requests", std::to_string(r.value("Requests", 0))},
        {"Request rate", std::to_string(r.value("Request rate", 0.0)) + " req/s"},
        {"Status", r.value("Status", "")},
    };
    std::ostringstream ss;
    for (const auto& [k, v] : rows) ss << std::left << std::setw(17) << k << v << "\n";
    return ss.str();
}

std::string render_report_table(const std::vector<std::string>& report_jsons) {
    std::ostringstream ss;
    ss << "UUID\tIP address\tLocation\tPort\tUser Agents\tAttack Types\tPossible owners\n";
    for (const auto& text : report_jsons) {
        auto r = json::parse(text);
        ss << r.value("UUID", "") << "\t" << r.value("IP address", "") << "\t"
           << join_strings(r.value("Location", json::array())) << "\t" << r.value("Port", 0) << "\t"
           << join_strings(r.value("User Agents", json::array())) << "\t"
           << join_strings(r.value("Attack Types", json::array())) << "\t"
           << owners_text(r.value("Possible owners", json::object())) << "\n";
    }
    return ss.str();
}

void block_shutdown_signals() {
    // background jobs start with SIGINT ignored, and sigwait never sees
    // ignored signals
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"webtrap: reactive web application honeypot", "webtrap"};
    app.require_subcommand(1);

    std::string target, path;
    int max_depth = 3;
    std::size_t concurrency = 10;
    auto* clone = app.add_subcommand("clone", "clone a site into a page directory");
    clone->add_option("--target", target, "root URL to crawl")->required();
    clone->add_option("--max-depth", max_depth, "link depth bound")->check(CLI::NonNegativeNumber);
    clone->add_option("--path", path, "output directory")->required();
    clone->add_option("--concurrency", concurrency, "parallel fetches")->check(CLI::PositiveNumber);

    std::string page_dir, tanner, listen, log_dir;
    auto* serve = app.add_subcommand("serve", "serve a clone and forward events");
    serve->add_option("--page-dir", page_dir, "clone directory holding meta.json")->required();
    serve->add_option("--tanner", tanner, "analysis service host:port (env " + std::string(kEnvTanner) + ")");
    serve->add_option("--listen", listen, "listen host:port (env " + std::string(kEnvServeListen) + ")");
    serve->add_option("--log-dir", log_dir, "directory for the debug and error logs");

    std::string config_path;
    auto* analyze = app.add_subcommand("analyze", "run the analysis service");
    analyze->add_option("--listen", listen, "listen host:port (env " + std::string(kEnvAnalyzeListen) + ")");
    analyze->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    analyze->add_option("--log-dir", log_dir, "directory for the debug and error logs");

    std::string session;
    bool all = false, raw_json = false;
    auto* report = app.add_subcommand("report", "print session reports");
    auto* session_opt = report->add_option("--session", session, "session uuid");
    auto* all_opt = report->add_flag("--all", all, "every session, one row each");
    session_opt->excludes(all_opt);
    report->add_option("--tanner", tanner, "analysis service host:port (env " + std::string(kEnvTanner) + ")");
    report->add_flag("--json", raw_json, "print the report documents");

    try {
        app.parse(argc, argv);
        if (report->parsed() && session.empty() && !all) throw CLI::RequiredError("--session or --all");
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (clone->parsed()) return run_clone(target, max_depth, path, concurrency, out, err);
    if (serve->parsed()) return run_serve(page_dir, tanner, listen, log_dir, out, err);
    if (analyze->parsed()) return run_analyze(listen, config_path, log_dir, out, err);
    return run_report(session, all, raw_json, tanner, out, err);
}

}  // namespace webtrap::cli
