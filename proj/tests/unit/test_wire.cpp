#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>

#include "drtt/backends.hpp"
#include "drtt/error.hpp"
#include "drtt/wire.hpp"

#include "../support/oracles.hpp"
#include "../support/scratch.hpp"

using namespace drtt;
using oracle::toks;
using Json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

/// Minimal line reader/writer over a raw socket for fake servers.
struct Line {
    int fd;
    std::string buffer;

    std::optional<std::string> read() {
        for (;;) {
            auto nl = buffer.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                return line;
            }
            char chunk[1024];
            ssize_t n = ::read(fd, chunk, sizeof chunk);
            if (n <= 0)
                return std::nullopt;
            buffer.append(chunk, static_cast<std::size_t>(n));
        }
    }
    void write(const std::string &line) {
        std::string data = line + "\n";
        (void)!::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    }
};

/// Accepts one connection on an ephemeral loopback port and runs `session`.
class FakeServer {
  public:
    explicit FakeServer(std::function<void(Line &)> session) {
        listener_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::bind(listener_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) == 0);
        REQUIRE(::listen(listener_, 1) == 0);
        socklen_t len = sizeof addr;
        ::getsockname(listener_, reinterpret_cast<sockaddr *>(&addr), &len);
        port = ntohs(addr.sin_port);
        thread_ = std::thread([this, session = std::move(session)] {
            int fd = ::accept(listener_, nullptr, nullptr);
            if (fd < 0)
                return;
            Line line{fd, {}};
            session(line);
            ::close(fd);
        });
    }
    ~FakeServer() {
        ::shutdown(listener_, SHUT_RDWR);
        thread_.join();
        ::close(listener_);
    }

    std::uint16_t port = 0;

  private:
    int listener_ = -1;
    std::thread thread_;
};

std::unique_ptr<wire::WireClient> client_for(const FakeServer &server,
                                             std::chrono::milliseconds timeout = 2000ms) {
    return std::make_unique<wire::WireClient>(wire::connect_tcp("127.0.0.1", server.port),
                                              timeout, "fake");
}

Json reply_identity(const std::string &line) {
    auto req = Json::parse(line);
    return wire::translate_response(req["id"].get<std::uint64_t>(),
                                    req["tokens"].get<Tokens>());
}

std::string mock_server(const std::string &args) {
    return std::string("'") + DRTT_MOCK_SERVER + "' " + args;
}

} // namespace

TEST_SUITE("wire") {

TEST_CASE("request and response messages carry the documented fields") {
    auto t = wire::translate_request(3, Direction::tgt2src, toks("a b"));
    CHECK(t == Json::parse(R"({"id":3,"op":"translate","direction":"tgt2src","tokens":["a","b"]})"));

    FillRequest f;
    f.tokens = toks("a b c");
    f.mask_start = 1;
    f.mask_end = 2;
    f.k = 4;
    auto m = wire::fill_request(4, f);
    CHECK(m["op"] == "fill");
    CHECK(m["mask_start"] == 1);
    CHECK(m["mask_end"] == 2);
    CHECK(m["k"] == 4);
    CHECK_FALSE(m.contains("context_src"));
    f.context_src = toks("x");
    CHECK(wire::fill_request(5, f)["context_src"] == Json::array({"x"}));

    auto ok = wire::decode_translate(wire::translate_response(1, toks("q r")));
    CHECK(*ok.value == toks("q r"));
    auto err = wire::decode_translate(wire::error_response(1, "overloaded"));
    CHECK_FALSE(err.ok());
    CHECK(err.error.find("overloaded") != std::string::npos);
    CHECK_FALSE(wire::decode_translate(Json::parse(R"({"id":1})")).ok());
    CHECK_FALSE(wire::decode_translate(Json::parse(R"({"id":1,"ok":true,"tokens":[1]})")).ok());

    auto fill = wire::decode_fill(wire::fill_response(2, {{toks("z"), -0.5}}));
    REQUIRE(fill.ok());
    CHECK((*fill.value)[0] == FillCandidate{toks("z"), -0.5});
    CHECK_FALSE(wire::decode_fill(Json::parse(R"({"id":2,"ok":true})")).ok());
}

TEST_CASE("answer_line serves translate and fill and reports errors") {
    DictionaryTranslator dict(oracle::table({{"a", "x"}}));
    auto r = Json::parse(wire::answer_line(
        wire::translate_request(9, Direction::src2tgt, toks("a b")).dump(), dict));
    CHECK(r == Json::parse(R"({"id":9,"ok":true,"tokens":["x","b"]})"));

    auto bad = Json::parse(wire::answer_line("{not json", dict));
    CHECK(bad["ok"] == false);
    CHECK(bad["id"] == 0);
    bad = Json::parse(wire::answer_line(R"({"op":"translate"})", dict));
    CHECK(bad["ok"] == false);
    bad = Json::parse(wire::answer_line(R"({"id":5,"op":"dance"})", dict));
    CHECK(bad["id"] == 5);
    CHECK(bad["ok"] == false);
    bad = Json::parse(
        wire::answer_line(R"({"id":6,"op":"translate","direction":"up","tokens":[]})", dict));
    CHECK(bad["id"] == 6);
    CHECK(bad["ok"] == false);

    TableMlm mlm({{toks("b"), {toks("p"), toks("q"), toks("r")}}});
    FillRequest f;
    f.tokens = toks("a b");
    f.mask_start = 1;
    f.mask_end = 2;
    f.k = 2;
    auto filled = Json::parse(wire::answer_line(wire::fill_request(7, f).dump(), mlm));
    REQUIRE(filled["ok"] == true);
    CHECK(filled["candidates"].size() == 2);
    CHECK(filled["candidates"][0]["tokens"] == Json::array({"p"}));

    // A context makes the request a T-MLM query, which the M-MLM table rejects.
    f.context_src = toks("a b");
    TableTmlm tmlm(PhraseTable{{toks("a"), {toks("y")}}});
    filled = Json::parse(wire::answer_line(wire::fill_request(8, f).dump(), tmlm));
    REQUIRE(filled["ok"] == true);
    CHECK(filled["candidates"][0]["tokens"] == Json::array({"y"}));
    f.k = 0;
    CHECK(Json::parse(wire::answer_line(wire::fill_request(8, f).dump(), tmlm))["ok"] == false);
}

TEST_CASE("client correlates responses answered in reverse order") {
    FakeServer server([](Line &io) {
        std::vector<std::string> held;
        while (auto line = io.read()) {
            held.push_back(*line);
            if (held.size() == 5) {
                for (auto it = held.rbegin(); it != held.rend(); ++it)
                    io.write(reply_identity(*it).dump());
                held.clear();
            }
        }
    });
    auto client = client_for(server);
    std::vector<Tokens> batch;
    for (int i = 0; i < 5; ++i)
        batch.push_back(toks("w" + std::to_string(i) + " end"));
    auto out = client->translate(batch, Direction::src2tgt);
    REQUIRE(out.size() == 5);
    for (int i = 0; i < 5; ++i)
        CHECK(*out[i].value == batch[i]);
}

TEST_CASE("client retries a failed request exactly once") {
    std::atomic<int> seen{0};
    FakeServer server([&seen](Line &io) {
        while (auto line = io.read()) {
            const int n = ++seen;
            auto id = Json::parse(*line)["id"].get<std::uint64_t>();
            // First attempt fails; the retry succeeds. Garbage and unknown ids are ignored.
            io.write("garbage");
            io.write(wire::translate_response(id + 1000, toks("stray")).dump());
            io.write(n == 1 ? wire::error_response(id, "busy").dump()
                            : reply_identity(*line).dump());
        }
    });
    auto client = client_for(server);
    auto out = client->translate({toks("hi")}, Direction::src2tgt);
    CHECK(out[0].ok());
    CHECK(*out[0].value == toks("hi"));
    CHECK(seen == 2);
}

TEST_CASE("persistent failures surface after two attempts") {
    std::atomic<int> seen{0};
    FakeServer server([&seen](Line &io) {
        while (auto line = io.read()) {
            ++seen;
            io.write(wire::error_response(Json::parse(*line)["id"], "no model").dump());
        }
    });
    auto client = client_for(server);
    FillRequest f;
    f.tokens = toks("a b");
    f.mask_start = 0;
    f.mask_end = 1;
    f.k = 1;
    auto out = client->fill(f);
    CHECK_FALSE(out.ok());
    CHECK(out.error.find("no model") != std::string::npos);
    CHECK(seen == 2);
}

TEST_CASE("silent servers time out") {
    std::atomic<int> seen{0};
    FakeServer server([&seen](Line &io) {
        while (io.read())
            ++seen;
    });
    auto client = client_for(server, 50ms);
    auto start = std::chrono::steady_clock::now();
    auto out = client->translate({toks("a")}, Direction::src2tgt);
    CHECK_FALSE(out[0].ok());
    CHECK(out[0].error.find("timeout") != std::string::npos);
    CHECK(std::chrono::steady_clock::now() - start >= 100ms);
    client.reset();
    CHECK(seen == 2);
}

TEST_CASE("a closed connection fails pending and later requests") {
    FakeServer server([](Line &io) { (void)io.read(); });
    auto client = client_for(server, 5000ms);
    auto start = std::chrono::steady_clock::now();
    auto out = client->translate({toks("a")}, Direction::src2tgt);
    CHECK_FALSE(out[0].ok());
    CHECK(std::chrono::steady_clock::now() - start < 4000ms);
    CHECK_FALSE(client->translate({toks("b")}, Direction::src2tgt)[0].ok());
}

TEST_CASE("concurrent callers share one connection") {
    FakeServer server([](Line &io) {
        while (auto line = io.read())
            io.write(reply_identity(*line).dump());
    });
    auto client = client_for(server);
    std::vector<std::thread> threads;
    std::atomic<int> good{0};
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 25; ++i) {
                Tokens s = toks("t" + std::to_string(t) + " i" + std::to_string(i));
                auto out = client->translate({s}, Direction::src2tgt);
                if (out[0].ok() && *out[0].value == s)
                    ++good;
            }
        });
    for (auto &th : threads)
        th.join();
    CHECK(good == 100);
}

TEST_CASE("stdio endpoint talks to the mock server, also out of order") {
    auto dir = scratch::dir("wire_stdio");
    scratch::write(dir / "dict.tsv", "hello\thallo\nworld\twelt\n");
    const std::string dict = "mock:dict:" + (dir / "dict.tsv").string();

    auto plain = open_backend(BackendKind::translator, Direction::src2tgt,
                              "stdio:" + mock_server("--kind translator --endpoint " + dict));
    CHECK(translate_one(plain, toks("hello world")) == toks("hallo welt"));

    auto reversed = open_backend(
        BackendKind::translator, Direction::src2tgt,
        "stdio:" + mock_server("--kind translator --endpoint " + dict + " --reverse-window 4"));
    std::vector<Tokens> batch = {toks("hello"), toks("world"), toks("hello world"), toks("x"),
                                 toks("world hello"), toks("y hello")};
    auto out = translate_all(reversed, batch);
    CHECK(out == std::vector<Tokens>{toks("hallo"), toks("welt"), toks("hallo welt"), toks("x"),
                                     toks("welt hallo"), toks("y hallo")});

    scratch::write(dir / "mlm.tsv", "big\tlarge\thuge\tvast\n");
    auto mlm = open_backend(
        BackendKind::mmlm, std::nullopt,
        "stdio:" + mock_server("--kind mmlm --endpoint mock:mlm:" + (dir / "mlm.tsv").string()));
    FillRequest f;
    f.tokens = toks("a big dog");
    f.mask_start = 1;
    f.mask_end = 2;
    f.k = 1;
    auto filled = mlm.fill(f);
    REQUIRE(filled.ok());
    REQUIRE(filled.value->size() == 1);
    CHECK((*filled.value)[0].tokens == toks("large"));
}

TEST_CASE("tcp endpoint talks to the mock server") {
    auto dir = scratch::dir("wire_tcp");
    scratch::write(dir / "dict.tsv", "hello\thallo\n");
    int out[2];
    REQUIRE(::pipe(out) == 0);
    const std::string endpoint = "mock:dict:" + (dir / "dict.tsv").string();
    pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        ::dup2(out[1], STDOUT_FILENO);
        ::close(out[0]);
        ::close(out[1]);
        ::execl(DRTT_MOCK_SERVER, DRTT_MOCK_SERVER, "--kind", "translator", "--endpoint",
                endpoint.c_str(), "--port", "0", "--reverse-window", "3",
                static_cast<char *>(nullptr));
        ::_exit(127);
    }
    ::close(out[1]);
    Line banner{out[0], {}};
    auto first = banner.read();
    REQUIRE(first);
    REQUIRE(first->rfind("listening ", 0) == 0);
    const std::string port = first->substr(10);
    {
        auto tcp = open_backend(BackendKind::translator, Direction::src2tgt,
                                "tcp:127.0.0.1:" + port);
        auto got = translate_all(tcp, {toks("hello"), toks("a hello"), toks("b"), toks("hello c")});
        CHECK(got == std::vector<Tokens>{toks("hallo"), toks("a hallo"), toks("b"),
                                         toks("hallo c")});
    }
    ::kill(pid, SIGTERM);
    ::waitpid(pid, nullptr, 0);
    ::close(out[0]);
}

TEST_CASE("stdio endpoint whose process exits fails instead of hanging") {
    auto gone = open_backend(BackendKind::translator, Direction::src2tgt, "stdio:true", 5000ms);
    CHECK_THROWS_AS(translate_one(gone, toks("a")), BackendError);
}

}
