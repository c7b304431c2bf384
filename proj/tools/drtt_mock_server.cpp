// Serves a mock provider over the line protocol, on stdio or TCP.
// --reverse-window N answers each burst of up to N requests in reverse
// order, which exercises client-side id correlation.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <csignal>
#include <cstring>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "drtt/backends.hpp"
#include "drtt/error.hpp"
#include "drtt/wire.hpp"

namespace {

class LineReader {
  public:
    explicit LineReader(int fd) : fd_(fd) {}

    enum class Status { line, idle, eof };

    /// Waits up to `timeout_ms` (-1 = forever) for a complete line.
    Status next(std::string &line, int timeout_ms) {
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return Status::line;
            }
            if (eof_)
                return Status::eof;
            pollfd pfd{fd_, POLLIN, 0};
            const int ready = ::poll(&pfd, 1, timeout_ms);
            if (ready == 0)
                return Status::idle;
            if (ready < 0)
                return Status::eof;
            char chunk[4096];
            const ssize_t n = ::read(fd_, chunk, sizeof chunk);
            if (n <= 0) {
                eof_ = true;
                if (!buffer_.empty()) {
                    line = std::move(buffer_);
                    buffer_.clear();
                    return Status::line;
                }
                continue;
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

  private:
    int fd_;
    std::string buffer_;
    bool eof_ = false;
};

bool write_all(int fd, const std::string &text) {
    std::size_t done = 0;
    while (done < text.size()) {
        const ssize_t n = ::write(fd, text.data() + done, text.size() - done);
        if (n <= 0)
            return false;
        done += static_cast<std::size_t>(n);
    }
    return true;
}

void serve(int in_fd, int out_fd, drtt::Provider &provider, std::size_t window) {
    LineReader reader(in_fd);
    std::vector<std::string> pending;
    auto flush = [&] {
        for (auto it = pending.rbegin(); it != pending.rend(); ++it)
            if (!write_all(out_fd, drtt::wire::answer_line(*it, provider) + "\n"))
                return false;
        pending.clear();
        return true;
    };
    for (;;) {
        std::string line;
        const auto status = reader.next(line, pending.empty() ? -1 : 20);
        if (status == LineReader::Status::eof) {
            flush();
            return;
        }
        if (status == LineReader::Status::idle) {
            if (!flush())
                return;
            continue;
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        pending.push_back(std::move(line));
        if (pending.size() >= window && !flush())
            return;
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Mock model server speaking the drtt line protocol", "drtt-mock-server"};
    std::string kind_name = "translator";
    std::string endpoint = "mock:identity";
    std::optional<int> port;
    std::size_t window = 1;
    app.add_option("--kind", kind_name, "translator | mmlm | tmlm");
    app.add_option("--endpoint", endpoint, "mock endpoint descriptor");
    app.add_option("--port", port, "listen on 127.0.0.1:PORT instead of stdio (0 = any)");
    app.add_option("--reverse-window", window, "answer bursts of up to N requests in reverse");
    CLI11_PARSE(app, argc, argv);

    std::signal(SIGPIPE, SIG_IGN);
    std::shared_ptr<drtt::Provider> provider;
    try {
        const auto kind = drtt::parse_backend_kind(kind_name);
        if (endpoint.rfind("mock:", 0) != 0)
            throw drtt::InputError("only mock endpoints can be served");
        provider = drtt::open_provider(kind, endpoint);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    if (window == 0)
        window = 1;

    if (!port) {
        serve(STDIN_FILENO, STDOUT_FILENO, *provider, window);
        return 0;
    }

    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    const int on = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &on, sizeof on);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(*port));
    socklen_t len = sizeof addr;
    if (::bind(listener, reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0 ||
        ::listen(listener, 16) != 0 ||
        ::getsockname(listener, reinterpret_cast<sockaddr *>(&addr), &len) != 0) {
        std::cerr << "error: cannot listen: " << std::strerror(errno) << '\n';
        return 2;
    }
    std::cout << "listening " << ntohs(addr.sin_port) << std::endl;
    for (;;) {
        const int conn = ::accept(listener, nullptr, nullptr);
        if (conn < 0)
            continue;
        std::thread([conn, provider, window] {
            serve(conn, conn, *provider, window);
            ::close(conn);
        }).detach();
    }
}
