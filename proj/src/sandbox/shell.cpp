#include "webtrap/sandbox/shell.hpp"

#include <cstdint>
#include <optional>
#include <vector>

#include "webtrap/util/strings.hpp"

namespace webtrap::sandbox {

namespace {

constexpr std::string_view kHostname = "web-prod-02";
constexpr int kMaxSubstitutionDepth = 4;

enum class Op { none, seq, and_if, or_if, pipe };

struct Word {
    std::string text;
};

struct Redirect {
    std::string input;        // '<' target
    bool discard_out = false;  // '>/dev/null'
    std::string write_target;  // any other '>' target (always fails, read-only)
};

struct SimpleCommand {
    std::vector<std::string> argv;
    Redirect redirect;
};

// A list of pipelines joined by ;, && or ||.
struct Pipeline {
    std::vector<SimpleCommand> commands;
    Op next = Op::none;  // operator joining this pipeline to the following one
};

struct Shell {
    const VirtualFilesystem& vfs;
    const Deadline& deadline;
    std::string cwd = "/var/www/html";
    std::string out;
    bool truncated = false;

    void emit(std::string_view s, std::string* sink) {
        std::string& target = sink ? *sink : out;
        if (target.size() + s.size() > kOutputLimit) {
            target.append(s.substr(0, kOutputLimit - std::min(kOutputLimit, target.size())));
            truncated = true;
            return;
        }
        target.append(s);
    }

    ShellResult run(std::string_view line, int depth);
    int run_pipeline(const Pipeline& p, std::string* sink);
    int run_command(const SimpleCommand& cmd, std::string_view stdin_data, std::string& stdout_buf,
                    std::string* err_sink);
    std::string substitute(std::string_view inner, int depth);

    // builtins; write stdout to o, stderr through emit(err)
    int cmd_cat(const std::vector<std::string>& args, std::string_view in, std::string& o, std::string* err);
    int cmd_ls(const std::vector<std::string>& args, std::string& o, std::string* err);
    int cmd_head_tail(bool head, const std::vector<std::string>& args, std::string_view in, std::string& o,
                      std::string* err);
};

// ---------------------------------------------------------------------------
// Lexing

struct Token {
    enum Kind { word, oper, redirect_in, redirect_out, redirect_err_dup, end } kind;
    std::string text;
    Op op = Op::none;
};

class Lexer {
public:
    Lexer(Shell& shell, std::string_view src, int depth) : shell_(shell), src_(src), depth_(depth) {}

    Token next() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r')) ++pos_;
        if (pos_ >= src_.size()) return {Token::end, {}};
        char c = src_[pos_];
        if (c == '\n' || c == ';') {
            ++pos_;
            return {Token::oper, {}, Op::seq};
        }
        if (c == '&') {
            if (peek(1) == '&') {
                pos_ += 2;
                return {Token::oper, {}, Op::and_if};
            }
            ++pos_;  // background '&' runs in the foreground here
            return {Token::oper, {}, Op::seq};
        }
        if (c == '|') {
            if (peek(1) == '|') {
                pos_ += 2;
                return {Token::oper, {}, Op::or_if};
            }
            ++pos_;
            return {Token::oper, {}, Op::pipe};
        }
        if (c == '<') {
            ++pos_;
            return {Token::redirect_in, {}};
        }
        if (c == '>' || (c == '2' && peek(1) == '>') || (c == '1' && peek(1) == '>')) {
            if (c != '>') ++pos_;
            ++pos_;
            if (peek(0) == '>') ++pos_;
            if (peek(0) == '&') {
                pos_ += 1;
                while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
                return {Token::redirect_err_dup, {}};
            }
            return {Token::redirect_out, {}};
        }
        if (c == '#') {
            while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
            return next();
        }
        return {Token::word, read_word()};
    }

private:
    char peek(std::size_t off) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }

    std::string read_word() {
        std::string w;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ';' || c == '&' || c == '|' || c == '<' ||
                c == '>') {
                break;
            }
            if (c == '\'') {
                auto close = src_.find('\'', pos_ + 1);
                if (close == std::string_view::npos) close = src_.size();
                w.append(src_.substr(pos_ + 1, close - pos_ - 1));
                pos_ = std::min(close + 1, src_.size());
            } else if (c == '"') {
                ++pos_;
                while (pos_ < src_.size() && src_[pos_] != '"') {
                    if (src_[pos_] == '\\' && pos_ + 1 < src_.size() &&
                        std::string_view("\"\\$`").find(src_[pos_ + 1]) != std::string_view::npos) {
                        w.push_back(src_[pos_ + 1]);
                        pos_ += 2;
                    } else if (src_[pos_] == '`' || (src_[pos_] == '$' && peek(1) == '(')) {
                        w += read_substitution();
                    } else if (src_[pos_] == '$') {
                        w += read_variable();
                    } else {
                        w.push_back(src_[pos_++]);
                    }
                }
                if (pos_ < src_.size()) ++pos_;
            } else if (c == '\\') {
                if (pos_ + 1 < src_.size()) w.push_back(src_[pos_ + 1]);
                pos_ += 2;
            } else if (c == '`' || (c == '$' && peek(1) == '(')) {
                w += read_substitution();
            } else if (c == '$') {
                w += read_variable();
            } else {
                w.push_back(c);
                ++pos_;
            }
        }
        return w;
    }

    std::string read_variable() {
        ++pos_;  // '$'
        bool braced = peek(0) == '{';
        if (braced) ++pos_;
        std::size_t start = pos_;
        while (pos_ < src_.size() && util::is_word_char(src_[pos_])) ++pos_;
        std::string name(src_.substr(start, pos_ - start));
        if (braced && peek(0) == '}') ++pos_;
        if (name.empty()) return "$";
        if (name == "HOME") return "/var/www";
        if (name == "USER" || name == "LOGNAME") return "www-data";
        if (name == "PWD") return shell_.cwd;
        if (name == "SHELL") return "/bin/sh";
        if (name == "PATH") return "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin";
        if (name == "HOSTNAME") return std::string(kHostname);
        return {};
    }

    std::string read_substitution() {
        std::string_view inner;
        if (src_[pos_] == '`') {
            auto close = src_.find('`', pos_ + 1);
            if (close == std::string_view::npos) close = src_.size();
            inner = src_.substr(pos_ + 1, close - pos_ - 1);
            pos_ = std::min(close + 1, src_.size());
        } else {
            std::size_t start = pos_ + 2;
            int level = 1;
            std::size_t i = start;
            for (; i < src_.size() && level > 0; ++i) {
                if (src_[i] == '(') ++level;
                if (src_[i] == ')') --level;
            }
            std::size_t end = level == 0 ? i - 1 : src_.size();
            inner = src_.substr(start, end - start);
            pos_ = std::min(i, src_.size());
        }
        return shell_.substitute(inner, depth_);
    }

    Shell& shell_;
    std::string_view src_;
    std::size_t pos_ = 0;
    int depth_;
};

std::vector<Pipeline> parse(Shell& shell, std::string_view line, int depth) {
    Lexer lex(shell, line, depth);
    std::vector<Pipeline> list(1);
    list.back().commands.emplace_back();
    for (Token t = lex.next(); t.kind != Token::end; t = lex.next()) {
        auto& cmd = list.back().commands.back();
        switch (t.kind) {
            case Token::word:
                cmd.argv.push_back(std::move(t.text));
                break;
            case Token::redirect_in: {
                Token target = lex.next();
                if (target.kind == Token::word) cmd.redirect.input = target.text;
                break;
            }
            case Token::redirect_out: {
                Token target = lex.next();
                if (target.kind != Token::word) break;
                if (target.text == "/dev/null") cmd.redirect.discard_out = true;
                else cmd.redirect.write_target = target.text;
                break;
            }
            case Token::redirect_err_dup:
                break;
            case Token::oper:
                if (t.op == Op::pipe) {
                    list.back().commands.emplace_back();
                } else {
                    list.back().next = t.op;
                    list.emplace_back();
                    list.back().commands.emplace_back();
                }
                break;
            case Token::end:
                break;
        }
    }
    return list;
}

// ---------------------------------------------------------------------------

std::string Shell::substitute(std::string_view inner, int depth) {
    if (depth >= kMaxSubstitutionDepth) return {};
    Shell child{vfs, deadline, cwd, {}, false};
    auto r = child.run(inner, depth + 1);
    std::string s = std::move(r.output);
    while (!s.empty() && s.back() == '\n') s.pop_back();
    // Unquoted substitution output is word-split; joining with spaces is
    // what the caller sees once the words are re-joined.
    for (char& c : s) {
        if (c == '\n') c = ' ';
    }
    return s;
}

ShellResult Shell::run(std::string_view line, int depth) {
    auto list = parse(*this, line, depth);
    int status = 0;
    Op prev = Op::none;
    for (const auto& p : list) {
        if (deadline.expired()) {
            truncated = true;
            break;
        }
        bool skip = (prev == Op::and_if && status != 0) || (prev == Op::or_if && status == 0);
        if (!skip) status = run_pipeline(p, nullptr);
        prev = p.next;
    }
    return {std::move(out), status, truncated};
}

int Shell::run_pipeline(const Pipeline& p, std::string* sink) {
    std::string data;
    int status = 0;
    bool any = false;
    for (const auto& cmd : p.commands) {
        if (cmd.argv.empty()) continue;
        any = true;
        std::string produced;
        status = run_command(cmd, data, produced, sink);
        data = std::move(produced);
    }
    if (any) emit(data, sink);
    return status;
}

int Shell::run_command(const SimpleCommand& cmd, std::string_view stdin_data, std::string& o,
                       std::string* err_sink) {
    std::string redirected_input;
    if (!cmd.redirect.input.empty()) {
        auto content = vfs.read_file(cmd.redirect.input, cwd);
        if (!content) {
            emit("sh: 1: cannot open " + cmd.redirect.input + ": No such file\n", err_sink);
            return 2;
        }
        redirected_input = std::move(*content);
        stdin_data = redirected_input;
    }
    if (!cmd.redirect.write_target.empty()) {
        emit("sh: 1: cannot create " + cmd.redirect.write_target + ": Permission denied\n", err_sink);
        return 2;
    }

    std::string name = cmd.argv.front();
    for (std::string_view dir : {"/bin/", "/usr/bin/", "/sbin/", "/usr/sbin/"}) {
        if (name.size() > dir.size() && name.compare(0, dir.size(), dir) == 0) {
            name = name.substr(dir.size());
            break;
        }
    }
    std::vector<std::string> args(cmd.argv.begin() + 1, cmd.argv.end());
    int status = 0;

    if (name == "echo") {
        bool newline = true;
        std::size_t i = 0;
        if (!args.empty() && args[0] == "-n") {
            newline = false;
            i = 1;
        }
        std::string line;
        for (; i < args.size(); ++i) {
            if (!line.empty()) line.push_back(' ');
            line += args[i];
        }
        o += line;
        if (newline) o.push_back('\n');
    } else if (name == "cat") {
        status = cmd_cat(args, stdin_data, o, err_sink);
    } else if (name == "ls") {
        status = cmd_ls(args, o, err_sink);
    } else if (name == "pwd") {
        o += cwd + "\n";
    } else if (name == "cd") {
        std::string target = args.empty() ? "/var/www" : args[0];
        auto resolved = VirtualFilesystem::normalize(target, cwd);
        if (vfs.is_dir(resolved)) {
            cwd = resolved;
        } else {
            emit("sh: 1: cd: can't cd to " + target + "\n", err_sink);
            status = 2;
        }
    } else if (name == "id") {
        o += "uid=33(www-data) gid=33(www-data) groups=33(www-data)\n";
    } else if (name == "whoami") {
        o += "www-data\n";
    } else if (name == "uname") {
        std::string flags;
        for (const auto& a : args) {
            if (a.size() > 1 && a[0] == '-') flags += a.substr(1);
        }
        if (flags.find('a') != std::string::npos) {
            o += "Linux " + std::string(kHostname) +
                 " 4.15.0-112-generic #113-Ubuntu SMP Thu Jul 9 23:41:39 UTC 2020 x86_64 x86_64 x86_64 GNU/Linux\n";
        } else {
            std::string line;
            auto add = [&line](std::string_view part) {
                if (!line.empty()) line.push_back(' ');
                line += part;
            };
            if (flags.empty() || flags.find('s') != std::string::npos) add("Linux");
            if (flags.find('n') != std::string::npos) add(kHostname);
            if (flags.find('r') != std::string::npos) add("4.15.0-112-generic");
            if (flags.find('m') != std::string::npos) add("x86_64");
            o += line + "\n";
        }
    } else if (name == "ping") {
        std::string host;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "-c" || args[i] == "-W" || args[i] == "-i" || args[i] == "-s") {
                ++i;
            } else if (!args[i].empty() && args[i][0] != '-') {
                host = args[i];
            }
        }
        if (host.empty()) {
            emit("ping: usage error: Destination address required\n", err_sink);
            return 1;
        }
        bool dotted = !host.empty() && host.find_first_not_of("0123456789.") == std::string::npos;
        std::string ip = host;
        if (!dotted) {
            std::uint32_t h = 2166136261u;
            for (char c : host) h = (h ^ static_cast<unsigned char>(c)) * 16777619u;
            ip = "198.51.100." + std::to_string(h % 254 + 1);
        }
        o += "PING " + host + " (" + ip + ") 56(84) bytes of data.\n";
        o += "64 bytes from " + ip + ": icmp_seq=1 ttl=64 time=0.045 ms\n";
        o += "--- " + host + " ping statistics ---\n";
        o += "1 packets transmitted, 1 received, 0% packet loss, time 0ms\n";
    } else if (name == "head" || name == "tail") {
        status = cmd_head_tail(name == "head", args, stdin_data, o, err_sink);
    } else if (name == "true" || name == ":" || name == "exit") {
        status = 0;
    } else if (name == "false") {
        status = 1;
    } else {
        emit("sh: " + cmd.argv.front() + ": not found\n", err_sink);
        status = 127;
    }

    if (o.size() > kOutputLimit) {
        o.resize(kOutputLimit);
        truncated = true;
    }
    if (cmd.redirect.discard_out) o.clear();
    return status;
}

int Shell::cmd_cat(const std::vector<std::string>& args, std::string_view in, std::string& o, std::string* err) {
    std::vector<std::string> files;
    for (const auto& a : args) {
        if (a == "-" || a.empty() || a[0] != '-') files.push_back(a);
    }
    if (files.empty()) {
        o.append(in);
        return 0;
    }
    int status = 0;
    for (const auto& f : files) {
        if (f == "-") {
            o.append(in);
            continue;
        }
        auto path = VirtualFilesystem::normalize(f, cwd);
        if (vfs.is_dir(path)) {
            emit("cat: " + f + ": Is a directory\n", err);
            status = 1;
        } else if (auto content = vfs.read_file(path)) {
            o += *content;
        } else {
            emit("cat: " + f + ": No such file or directory\n", err);
            status = 1;
        }
        if (o.size() > kOutputLimit) break;
    }
    return status;
}

int Shell::cmd_ls(const std::vector<std::string>& args, std::string& o, std::string* err) {
    bool all = false;
    bool long_format = false;
    std::vector<std::string> targets;
    for (const auto& a : args) {
        if (a.size() > 1 && a[0] == '-') {
            all = all || a.find('a') != std::string::npos;
            long_format = long_format || a.find('l') != std::string::npos;
        } else {
            targets.push_back(a);
        }
    }
    if (targets.empty()) targets.push_back(".");

    auto line_for = [&](const std::string& name, const VirtualFilesystem::Entry& e) {
        if (!long_format) return name + "\n";
        bool dir = e.kind == VirtualFilesystem::Kind::dir;
        std::string size = dir ? "4096" : std::to_string(e.content.size());
        return std::string(dir ? "drwxr-xr-x 2" : "-rw-r--r-- 1") + " root root " + size + " Jul  9 23:41 " + name +
               "\n";
    };

    int status = 0;
    bool headers = targets.size() > 1;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        auto path = VirtualFilesystem::normalize(targets[t], cwd);
        const auto* entry = vfs.find(path);
        if (entry == nullptr) {
            emit("ls: cannot access '" + targets[t] + "': No such file or directory\n", err);
            status = 2;
            continue;
        }
        if (entry->kind == VirtualFilesystem::Kind::file) {
            o += line_for(targets[t], *entry);
            continue;
        }
        if (headers) o += (t > 0 ? "\n" : "") + targets[t] + ":\n";
        if (all) {
            o += line_for(".", *entry);
            o += line_for("..", *entry);
        }
        for (const auto& child : vfs.list(path)) {
            if (!all && !child.empty() && child[0] == '.') continue;
            auto child_path = path == "/" ? "/" + child : path + "/" + child;
            o += line_for(child, *vfs.find(child_path));
        }
    }
    return status;
}

int Shell::cmd_head_tail(bool head, const std::vector<std::string>& args, std::string_view in, std::string& o,
                         std::string* err) {
    long count = 10;
    std::vector<std::string> files;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "-n" && i + 1 < args.size()) {
            count = std::strtol(args[++i].c_str(), nullptr, 10);
        } else if (a.size() > 1 && a[0] == '-' && a.find_first_not_of("0123456789", 1) == std::string::npos) {
            count = std::strtol(a.c_str() + 1, nullptr, 10);
        } else if (a.size() > 2 && a.compare(0, 2, "-n") == 0) {
            count = std::strtol(a.c_str() + 2, nullptr, 10);
        } else {
            files.push_back(a);
        }
    }
    if (count < 0) count = 0;

    auto take = [&](std::string_view text) {
        std::vector<std::string_view> lines;
        std::size_t start = 0;
        while (start < text.size()) {
            auto nl = text.find('\n', start);
            if (nl == std::string_view::npos) {
                lines.push_back(text.substr(start));
                break;
            }
            lines.push_back(text.substr(start, nl - start + 1));
            start = nl + 1;
        }
        auto n = std::min(lines.size(), static_cast<std::size_t>(count));
        std::size_t from = head ? 0 : lines.size() - n;
        for (std::size_t i = from; i < from + n; ++i) o.append(lines[i]);
    };

    if (files.empty()) {
        take(in);
        return 0;
    }
    int status = 0;
    for (const auto& f : files) {
        auto content = vfs.read_file(f, cwd);
        if (!content) {
            emit(std::string(head ? "head" : "tail") + ": cannot open '" + f + "' for reading: No such file or directory\n",
                 err);
            status = 1;
            continue;
        }
        take(*content);
    }
    return status;
}

}  // namespace

ShellResult exec_shell(std::string_view command_line, const VirtualFilesystem& vfs, const Deadline& deadline) {
    Shell shell{vfs, deadline};
    return shell.run(command_line, 0);
}

}  // namespace webtrap::sandbox
