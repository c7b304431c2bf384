#include "drtt/wire.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "drtt/error.hpp"

namespace drtt::wire {

// ---------------------------------------------------------------- messages --

Json translate_request(std::uint64_t id, Direction direction, const Tokens &tokens) {
    return {{"id", id}, {"op", "translate"}, {"direction", to_string(direction)}, {"tokens", tokens}};
}

Json fill_request(std::uint64_t id, const FillRequest &request) {
    Json j = {{"id", id},
              {"op", "fill"},
              {"tokens", request.tokens},
              {"mask_start", request.mask_start},
              {"mask_end", request.mask_end},
              {"k", request.k}};
    if (request.context_src)
        j["context_src"] = *request.context_src;
    return j;
}

Json translate_response(std::uint64_t id, const Tokens &tokens) {
    return {{"id", id}, {"ok", true}, {"tokens", tokens}};
}

Json fill_response(std::uint64_t id, const std::vector<FillCandidate> &candidates) {
    Json list = Json::array();
    for (const auto &c : candidates)
        list.push_back({{"tokens", c.tokens}, {"score", c.score}});
    return {{"id", id}, {"ok", true}, {"candidates", list}};
}

Json error_response(std::uint64_t id, const std::string &message) {
    return {{"id", id}, {"ok", false}, {"error", message}};
}

namespace {

std::string response_error(const Json &response) {
    if (!response.is_object())
        return "response is not a JSON object";
    if (!response.contains("ok") || !response["ok"].is_boolean())
        return "response lacks boolean \"ok\"";
    if (!response["ok"].get<bool>()) {
        auto it = response.find("error");
        return it != response.end() && it->is_string() ? it->get<std::string>()
                                                       : std::string("backend reported failure");
    }
    return {};
}

} // namespace

TranslateOutcome decode_translate(const Json &response) {
    if (auto err = response_error(response); !err.empty())
        return TranslateOutcome::failure(err);
    try {
        return TranslateOutcome::success(response.at("tokens").get<Tokens>());
    } catch (const Json::exception &e) {
        return TranslateOutcome::failure(std::string("malformed translate response: ") + e.what());
    }
}

FillOutcome decode_fill(const Json &response) {
    if (auto err = response_error(response); !err.empty())
        return FillOutcome::failure(err);
    try {
        std::vector<FillCandidate> out;
        for (const auto &c : response.at("candidates"))
            out.push_back({c.at("tokens").get<Tokens>(), c.at("score").get<double>()});
        return FillOutcome::success(std::move(out));
    } catch (const Json::exception &e) {
        return FillOutcome::failure(std::string("malformed fill response: ") + e.what());
    }
}

std::string answer_line(const std::string &line, Provider &provider) {
    std::uint64_t id = 0;
    try {
        const Json request = Json::parse(line);
        if (!request.is_object() || !request.contains("id"))
            return error_response(0, "request lacks \"id\"").dump();
        id = request.at("id").get<std::uint64_t>();
        const std::string op = request.at("op").get<std::string>();
        if (op == "translate") {
            const auto direction = parse_direction(request.at("direction").get<std::string>());
            auto result = provider.translate({request.at("tokens").get<Tokens>()}, direction);
            if (result.size() != 1 || !result[0].ok())
                return error_response(id, result.empty() ? "no result" : result[0].error).dump();
            return translate_response(id, *result[0].value).dump();
        }
        if (op == "fill") {
            FillRequest fill;
            fill.tokens = request.at("tokens").get<Tokens>();
            fill.mask_start = request.at("mask_start").get<std::size_t>();
            fill.mask_end = request.at("mask_end").get<std::size_t>();
            fill.k = request.at("k").get<std::size_t>();
            if (request.contains("context_src"))
                fill.context_src = request.at("context_src").get<Tokens>();
            fill.validate(fill.context_src ? BackendKind::tmlm : BackendKind::mmlm);
            auto result = provider.fill(fill);
            if (!result.ok())
                return error_response(id, result.error).dump();
            auto candidates = std::move(*result.value);
            std::stable_sort(candidates.begin(), candidates.end(),
                             [](const auto &a, const auto &b) { return a.score > b.score; });
            if (candidates.size() > fill.k)
                candidates.resize(fill.k);
            return fill_response(id, candidates).dump();
        }
        return error_response(id, "unknown op '" + op + "'").dump();
    } catch (const std::exception &e) {
        return error_response(id, e.what()).dump();
    }
}

// -------------------------------------------------------------- transports --

namespace {

class FdTransport : public Transport {
  public:
    FdTransport(int read_fd, int write_fd, bool socket, pid_t child = -1)
        : read_fd_(read_fd), write_fd_(write_fd), socket_(socket), child_(child) {}
    ~FdTransport() override {
        close();
        ::close(read_fd_);
        if (write_fd_ >= 0 && write_fd_ != read_fd_)
            ::close(write_fd_);
    }

    void write_line(const std::string &line) override {
        std::string data = line + "\n";
        std::size_t sent = 0;
        while (sent < data.size()) {
            ssize_t n = socket_ ? ::send(write_fd_, data.data() + sent, data.size() - sent,
                                         MSG_NOSIGNAL)
                                : ::write(write_fd_, data.data() + sent, data.size() - sent);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                throw BackendError(std::string("write to backend failed: ") + std::strerror(errno));
            sent += static_cast<std::size_t>(n);
        }
    }

    std::optional<std::string> read_line() override {
        for (;;) {
            auto newline = buffer_.find('\n');
            if (newline != std::string::npos) {
                std::string line = buffer_.substr(0, newline);
                buffer_.erase(0, newline + 1);
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                return line;
            }
            char chunk[4096];
            ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                return std::nullopt;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void close() override {
        std::lock_guard lock(close_mutex_);
        if (closed_)
            return;
        closed_ = true;
        if (socket_) {
            ::shutdown(read_fd_, SHUT_RDWR);
        } else {
            ::close(write_fd_);
            write_fd_ = -1;
            if (child_ > 0) {
                ::kill(child_, SIGTERM);
                ::waitpid(child_, nullptr, 0);
            }
        }
    }

  private:
    int read_fd_;
    int write_fd_;
    bool socket_;
    pid_t child_;
    std::string buffer_;
    std::mutex close_mutex_;
    bool closed_ = false;
};

} // namespace

std::unique_ptr<Transport> connect_tcp(const std::string &host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *found = nullptr;
    const std::string service = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0)
        throw BackendError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    int fd = -1;
    for (addrinfo *ai = found; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
            break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(found);
    if (fd < 0)
        throw BackendError("cannot connect to " + host + ":" + service);
    return std::make_unique<FdTransport>(fd, fd, true);
}

std::unique_ptr<Transport> spawn_stdio(const std::string &command) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0)
        throw BackendError("pipe failed");
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw BackendError("pipe failed");
    }
    std::signal(SIGPIPE, SIG_IGN);
    pid_t pid = ::fork();
    if (pid < 0)
        throw BackendError("fork failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    return std::make_unique<FdTransport>(from_child[0], to_child[1], false, pid);
}

std::unique_ptr<Transport> fd_transport(int read_fd, int write_fd) {
    return std::make_unique<FdTransport>(read_fd, write_fd, false);
}

// ------------------------------------------------------------------ client --

WireClient::WireClient(std::unique_ptr<Transport> transport, std::chrono::milliseconds timeout,
                       std::string description)
    : transport_(std::move(transport)), timeout_(timeout), description_(std::move(description)) {
    reader_ = std::thread([this] { reader_loop(); });
}

WireClient::~WireClient() {
    transport_->close();
    if (reader_.joinable())
        reader_.join();
}

void WireClient::reader_loop() {
    while (auto line = transport_->read_line()) {
        Json response;
        try {
            response = Json::parse(*line);
        } catch (const Json::exception &) {
            continue;
        }
        if (!response.is_object() || !response.contains("id") ||
            !response["id"].is_number_unsigned())
            continue;
        const auto id = response["id"].get<std::uint64_t>();
        std::lock_guard lock(pending_mutex_);
        auto it = pending_.find(id);
        if (it == pending_.end())
            continue;
        it->second.set_value(std::move(response));
        pending_.erase(it);
    }
    fail_all("backend '" + description_ + "' closed the connection");
}

void WireClient::fail_all(const std::string &reason) {
    std::lock_guard lock(pending_mutex_);
    closed_ = true;
    for (auto &[id, promise] : pending_)
        promise.set_value(error_response(id, reason));
    pending_.clear();
}

std::future<Json> WireClient::send(const Json &request, std::uint64_t id) {
    std::future<Json> future;
    {
        std::lock_guard lock(pending_mutex_);
        if (closed_) {
            std::promise<Json> failed;
            failed.set_value(error_response(id, "backend '" + description_ + "' is closed"));
            return failed.get_future();
        }
        future = pending_[id].get_future();
    }
    try {
        std::lock_guard lock(write_mutex_);
        transport_->write_line(request.dump());
    } catch (const std::exception &e) {
        std::lock_guard lock(pending_mutex_);
        auto it = pending_.find(id);
        if (it != pending_.end()) {
            it->second.set_value(error_response(id, e.what()));
            pending_.erase(it);
        }
    }
    return future;
}

std::optional<Json> WireClient::await(std::future<Json> &future, std::uint64_t id) {
    if (future.wait_for(timeout_) == std::future_status::ready)
        return future.get();
    std::lock_guard lock(pending_mutex_);
    // The reader may have fulfilled the promise between the wait and the lock.
    if (future.wait_for(std::chrono::seconds(0)) == std::future_status::ready)
        return future.get();
    pending_.erase(id);
    return std::nullopt;
}

std::vector<TranslateOutcome> WireClient::translate(const std::vector<Tokens> &batch,
                                                    Direction direction) {
    std::vector<TranslateOutcome> out(batch.size());
    std::vector<std::size_t> todo(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        todo[i] = i;

    for (int attempt = 0; attempt < 2 && !todo.empty(); ++attempt) {
        std::vector<std::pair<std::uint64_t, std::future<Json>>> inflight;
        for (auto i : todo) {
            const auto id = next_id();
            inflight.emplace_back(id, send(translate_request(id, direction, batch[i]), id));
        }
        std::vector<std::size_t> failed;
        for (std::size_t n = 0; n < todo.size(); ++n) {
            auto response = await(inflight[n].second, inflight[n].first);
            out[todo[n]] = response ? decode_translate(*response)
                                    : TranslateOutcome::failure("timeout after " +
                                                                std::to_string(timeout_.count()) +
                                                                " ms");
            if (!out[todo[n]].ok())
                failed.push_back(todo[n]);
        }
        todo = std::move(failed);
    }
    return out;
}

FillOutcome WireClient::fill(const FillRequest &request) {
    FillOutcome out = FillOutcome::failure("not sent");
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto id = next_id();
        auto future = send(fill_request(id, request), id);
        auto response = await(future, id);
        out = response ? decode_fill(*response)
                       : FillOutcome::failure("timeout after " + std::to_string(timeout_.count()) +
                                              " ms");
        if (out.ok())
            break;
    }
    return out;
}

} // namespace drtt::wire
