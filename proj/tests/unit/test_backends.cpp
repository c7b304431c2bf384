#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "drtt/backends.hpp"
#include "drtt/error.hpp"

#include "../support/oracles.hpp"
#include "../support/scratch.hpp"

using namespace drtt;
using oracle::toks;

namespace {

/// Counts calls and can fail chosen inputs.
class CountingTranslator : public Provider {
  public:
    std::atomic<int> calls{0};
    std::atomic<int> sentences{0};
    Tokens fail_on;

    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                            Direction) override {
        ++calls;
        sentences += static_cast<int>(batch.size());
        std::vector<TranslateOutcome> out;
        for (const auto &s : batch)
            out.push_back(s == fail_on ? TranslateOutcome::failure("boom")
                                       : TranslateOutcome::success(s));
        return out;
    }
    std::string describe() const override { return "counting"; }
};

/// Returns fixed candidates regardless of the request.
class FixedFill : public Provider {
  public:
    std::vector<FillCandidate> candidates;
    int calls = 0;
    FillOutcome fill(const FillRequest &) override {
        ++calls;
        return FillOutcome::success(candidates);
    }
    std::string describe() const override { return "fixed"; }
};

FillRequest mask(const std::string &text, std::size_t a, std::size_t b, std::size_t k) {
    FillRequest r;
    r.tokens = toks(text);
    r.mask_start = a;
    r.mask_end = b;
    r.k = k;
    return r;
}

} // namespace

TEST_SUITE("backends") {

TEST_CASE("identity, dictionary and lossy mocks") {
    IdentityTranslator id;
    CHECK(*id.translate({toks("a b")}, Direction::src2tgt)[0].value == toks("a b"));

    DictionaryTranslator dict(oracle::table({{"a", "x y"}, {"b", ""}}));
    CHECK(dict.lookup(toks("a b c")) == toks("x y c"));

    LossyTranslator lossy(oracle::table({{"a", "x"}}), {"x", "q"});
    CHECK(*lossy.translate({toks("a q r")}, Direction::tgt2src)[0].value == toks("r"));
}

TEST_CASE("table M-MLM skips the original phrase and ranks by order") {
    TableMlm mlm({{toks("big"), {toks("big"), toks("large"), toks("huge"), toks("vast")}}});
    auto out = mlm.fill(mask("a big dog", 1, 2, 2));
    REQUIRE(out.ok());
    REQUIRE(out.value->size() == 2);
    CHECK((*out.value)[0] == FillCandidate{toks("large"), 0.0});
    CHECK((*out.value)[1] == FillCandidate{toks("huge"), -1.0});
    CHECK(mlm.fill(mask("a small dog", 1, 2, 3)).value->empty());
}

TEST_CASE("table T-MLM proposes translations of context phrases absent from the target") {
    TableTmlm tmlm({{toks("light"), {toks("leicht")}},
                    {toks("red"), {toks("rot")}},
                    {toks("light red"), {toks("hellrot")}}});
    FillRequest r = mask("die kiste ist MASK und rot", 3, 4, 1);
    r.context_src = toks("the box is light and red");
    auto out = tmlm.fill(r);
    REQUIRE(out.ok());
    REQUIRE(out.value->size() == 1);
    CHECK((*out.value)[0].tokens == toks("leicht"));

    // Longest key first at each position; "rot" already occurs in the target.
    r.context_src = toks("the light red box");
    r.k = 3;
    out = tmlm.fill(r);
    REQUIRE(out.value->size() == 2);
    CHECK((*out.value)[0].tokens == toks("hellrot"));
    CHECK((*out.value)[1].tokens == toks("leicht"));

    r.context_src.reset();
    CHECK_FALSE(tmlm.fill(r).ok());
}

TEST_CASE("fill request validation") {
    auto r = mask("a b c", 1, 2, 1);
    CHECK_NOTHROW(r.validate(BackendKind::mmlm));
    CHECK_THROWS_AS(r.validate(BackendKind::tmlm), InputError);
    CHECK_THROWS_AS(r.validate(BackendKind::translator), InputError);
    r.context_src = toks("x");
    CHECK_NOTHROW(r.validate(BackendKind::tmlm));
    CHECK_THROWS_AS(r.validate(BackendKind::mmlm), InputError);
    CHECK_THROWS_AS(mask("a b", 1, 1, 1).validate(BackendKind::mmlm), InputError);
    CHECK_THROWS_AS(mask("a b", 1, 3, 1).validate(BackendKind::mmlm), InputError);
    CHECK_THROWS_AS(mask("a b", 0, 1, 0).validate(BackendKind::mmlm), InputError);
    CHECK(mask("a b c", 1, 3, 1).masked_phrase() == toks("b c"));
}

TEST_CASE("handle enforces the role/direction invariant") {
    auto p = std::make_shared<IdentityTranslator>();
    CHECK_THROWS_AS(BackendHandle(BackendKind::translator, std::nullopt, "x", p), InputError);
    CHECK_THROWS_AS(BackendHandle(BackendKind::mmlm, Direction::src2tgt, "x", p), InputError);
    CHECK_THROWS_AS(BackendHandle(BackendKind::mmlm, std::nullopt, "x", nullptr), InputError);
    BackendHandle mlm(BackendKind::mmlm, std::nullopt, "x", p);
    CHECK_THROWS_AS(mlm.translate({toks("a")}), InputError);
}

TEST_CASE("translate caches successes and deduplicates a batch") {
    auto p = std::make_shared<CountingTranslator>();
    p->fail_on = toks("bad");
    BackendHandle h(BackendKind::translator, Direction::src2tgt, "count", p);
    auto out = h.translate({toks("a"), toks("b"), toks("a"), toks("bad")});
    CHECK(p->sentences == 3);
    CHECK(*out[2].value == toks("a"));
    CHECK_FALSE(out[3].ok());
    CHECK(out[3].error == "boom");

    out = h.translate({toks("a"), toks("b"), toks("bad")});
    CHECK(p->sentences == 4); // only the failed sentence is retried
    CHECK(h.cache().hits() == 2);
    const auto key = BackendHandle::translate_cache_key(BackendKind::translator,
                                                        Direction::src2tgt, toks("a"));
    CHECK(h.cache().hit_count(key) == 1);
    CHECK(h.cache().size() == 2);

    // Copies share the cache; a different direction does not hit it.
    BackendHandle copy = h;
    copy.translate({toks("b")});
    CHECK(p->sentences == 4);
    BackendHandle other(BackendKind::translator, Direction::tgt2src, "count", p);
    other.translate({toks("b")});
    CHECK(p->sentences == 5);

    CHECK_THROWS_AS(translate_all(h, {toks("bad")}), BackendError);
    CHECK(translate_one(h, toks("a")) == toks("a"));
}

TEST_CASE("fill sorts, truncates to k, drops non-finite scores and echoes") {
    auto p = std::make_shared<FixedFill>();
    p->candidates = {{toks("b"), -1.0},
                     {toks("x"), 0.5},
                     {toks("y"), std::numeric_limits<double>::quiet_NaN()},
                     {toks("z"), 2.0},
                     {toks("w"), 0.5}};
    BackendHandle h(BackendKind::mmlm, std::nullopt, "fixed", p);
    auto out = h.fill(mask("a b c", 1, 2, 3));
    REQUIRE(out.ok());
    REQUIRE(out.value->size() == 3);
    CHECK((*out.value)[0].tokens == toks("z"));
    CHECK((*out.value)[1].tokens == toks("x")); // stable among equal scores
    CHECK((*out.value)[2].tokens == toks("w"));

    auto again = h.fill(mask("a b c", 1, 2, 3));
    CHECK(p->calls == 1);
    CHECK(*again.value == *out.value);

    out = h.fill(mask("a b c", 1, 2, 10));
    CHECK(out.value->size() == 3); // "b" is the masked original, NaN dropped
    CHECK_THROWS_AS(h.fill(mask("a b c", 1, 2, 0)), InputError);
}

TEST_CASE("cache is safe under concurrent use") {
    ResponseCache cache;
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&cache, t] {
            for (int i = 0; i < 500; ++i) {
                const std::string key = "k" + std::to_string(i % 50);
                if (!cache.lookup(key))
                    cache.store(key, "v" + std::to_string(i % 50));
                (void)t;
            }
        });
    for (auto &th : threads)
        th.join();
    CHECK(cache.size() == 50);
    CHECK(cache.hits() + cache.misses() == 4000);
    CHECK(*cache.lookup("k7") == "v7");
}

TEST_CASE("endpoint descriptors open the matching mocks") {
    auto dir = scratch::dir("backends_open");
    scratch::write(dir / "dict.tsv", "# comment\nhello\thallo\nworld\twelt\n");
    scratch::write(dir / "mlm.tsv", "big\tlarge\thuge\n");

    auto fwd = open_backend(BackendKind::translator, Direction::src2tgt,
                            "mock:dict:" + (dir / "dict.tsv").string());
    CHECK(translate_one(fwd, toks("hello world !")) == toks("hallo welt !"));
    auto lossy = open_backend(BackendKind::translator, Direction::tgt2src,
                              "mock:lossy:" + (dir / "dict.tsv").string() + ":welt");
    CHECK(translate_one(lossy, toks("hello world")) == toks("hallo"));
    auto id = open_backend(BackendKind::translator, Direction::src2tgt, "mock:identity");
    CHECK(translate_one(id, toks("x y")) == toks("x y"));
    auto mlm = open_backend(BackendKind::mmlm, std::nullopt,
                            "mock:mlm:" + (dir / "mlm.tsv").string());
    CHECK(mlm.fill(mask("a big dog", 1, 2, 5)).value->size() == 2);
    auto empty = open_backend(BackendKind::tmlm, std::nullopt, "mock:empty");
    auto r = mask("a b", 0, 1, 1);
    r.context_src = toks("x");
    CHECK(empty.fill(r).value->empty());

    CHECK_THROWS_AS(open_backend(BackendKind::mmlm, std::nullopt, "mock:identity"), InputError);
    CHECK_THROWS_AS(open_backend(BackendKind::translator, Direction::src2tgt, "mock:empty"),
                    InputError);
    CHECK_THROWS_AS(open_backend(BackendKind::translator, Direction::src2tgt, "carrier:pigeon"),
                    InputError);
    CHECK_THROWS_AS(open_backend(BackendKind::translator, Direction::src2tgt, "tcp:localhost"),
                    InputError);
    CHECK_THROWS_AS(open_backend(BackendKind::translator, Direction::src2tgt, "tcp:h:99999"),
                    InputError);
    CHECK_THROWS_AS(open_backend(BackendKind::translator, Direction::src2tgt,
                                 "mock:dict:" + (dir / "missing.tsv").string()),
                    InputError);
}

TEST_CASE("names parse and print") {
    CHECK(parse_backend_kind("tmlm") == BackendKind::tmlm);
    CHECK(to_string(BackendKind::mmlm) == "mmlm");
    CHECK(parse_direction("tgt2src") == Direction::tgt2src);
    CHECK_THROWS_AS(parse_direction("sideways"), InputError);
    CHECK_THROWS_AS(parse_backend_kind("oracle"), InputError);
}

}
