#pragma once

// Newline-delimited JSON protocol spoken between the toolkit and external
// model servers. One JSON object per line in each direction; responses may
// arrive in any order and are correlated by "id".

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "drtt/backends.hpp"

namespace drtt::wire {

using Json = nlohmann::json;

Json translate_request(std::uint64_t id, Direction direction, const Tokens &tokens);
Json fill_request(std::uint64_t id, const FillRequest &request);

Json translate_response(std::uint64_t id, const Tokens &tokens);
Json fill_response(std::uint64_t id, const std::vector<FillCandidate> &candidates);
Json error_response(std::uint64_t id, const std::string &message);

/// Decodes a response payload; failures (ok=false, malformed) become errors.
TranslateOutcome decode_translate(const Json &response);
FillOutcome decode_fill(const Json &response);

/// Server side: answers one request line with `provider`. Never throws;
/// malformed requests produce {"ok": false} responses carrying the id if known.
std::string answer_line(const std::string &line, Provider &provider);

/// A bidirectional line channel.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual void write_line(const std::string &line) = 0;
    /// Blocks for the next line; nullopt at end of stream.
    virtual std::optional<std::string> read_line() = 0;
    virtual void close() = 0;
};

std::unique_ptr<Transport> connect_tcp(const std::string &host, std::uint16_t port);
/// Spawns `/bin/sh -c command` and talks to its stdin/stdout.
std::unique_ptr<Transport> spawn_stdio(const std::string &command);
/// Wraps an already-open pair of file descriptors (read end, write end).
std::unique_ptr<Transport> fd_transport(int read_fd, int write_fd);

/// Client provider multiplexing many in-flight requests over one transport.
/// A background reader thread routes responses to waiting callers by id.
/// Each failed or timed-out request is retried once.
class WireClient : public Provider {
  public:
    WireClient(std::unique_ptr<Transport> transport, std::chrono::milliseconds timeout,
               std::string description);
    ~WireClient() override;

    WireClient(const WireClient &) = delete;
    WireClient &operator=(const WireClient &) = delete;

    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                            Direction direction) override;
    FillOutcome fill(const FillRequest &request) override;
    std::string describe() const override { return description_; }

  private:
    std::uint64_t next_id() { return ++last_id_; }
    std::future<Json> send(const Json &request, std::uint64_t id);
    std::optional<Json> await(std::future<Json> &future, std::uint64_t id);
    void reader_loop();
    void fail_all(const std::string &reason);

    std::unique_ptr<Transport> transport_;
    std::chrono::milliseconds timeout_;
    std::string description_;
    std::atomic<std::uint64_t> last_id_{0};
    std::mutex write_mutex_;
    std::mutex pending_mutex_;
    std::map<std::uint64_t, std::promise<Json>> pending_;
    bool closed_ = false;
    std::thread reader_;
};

} // namespace drtt::wire
