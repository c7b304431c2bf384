#include <doctest.h>

#include <random>

#include "drtt/error.hpp"
#include "drtt/metrics.hpp"

#include "../support/oracles.hpp"

using namespace drtt;
using oracle::toks;

TEST_SUITE("metrics") {

TEST_CASE("sentence BLEU fixture") {
    CHECK(sentence_bleu(toks("the cat sat"), toks("the cat sat down")).value ==
          doctest::Approx(oracle::frozen::kCatSat).epsilon(1e-12));
}

TEST_CASE("sentence BLEU bounds and identity") {
    const auto ref = toks("a quick brown fox jumps over");
    CHECK(sentence_bleu(ref, ref).value == doctest::Approx(1.0));
    CHECK(sentence_bleu({}, ref).value == 0.0);
    CHECK_THROWS_AS(sentence_bleu(ref, {}), InputError);
    std::mt19937 rng(1);
    for (int i = 0; i < 200; ++i) {
        auto h = oracle::random_sentence(rng, 0, 10, 4, "w");
        auto r = oracle::random_sentence(rng, 1, 10, 4, "w");
        const double v = sentence_bleu(h, r).value;
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("brevity penalty applies only to short hypotheses") {
    const auto r = sentence_bleu(toks("a b c"), toks("a b c d e f"));
    CHECK(r.brevity_penalty == doctest::Approx(std::exp(1.0 - 6.0 / 3.0)));
    CHECK(sentence_bleu(toks("a b c d e f g"), toks("a b c")).brevity_penalty == 1.0);
}

TEST_CASE("clipping limits repeated n-grams") {
    const auto stats = collect_stats(toks("the the the"), toks("the cat"));
    CHECK(stats.matches[0] == 1);
    CHECK(stats.totals[0] == 3);
}

TEST_CASE("corpus BLEU is micro-averaged, not a mean of sentence scores") {
    const std::vector<Tokens> hyps = {toks("a b c d"), toks("e f g h i")};
    const std::vector<Tokens> refs = {toks("a b c d"), toks("e f x h i")};
    const double micro = corpus_bleu(hyps, refs).value;
    CHECK(micro == doctest::Approx(oracle::corpus_bleu(hyps, refs)).epsilon(1e-12));
    const double mean = (sentence_bleu(hyps[0], refs[0]).value +
                         sentence_bleu(hyps[1], refs[1]).value) / 2.0;
    CHECK(micro != doctest::Approx(mean));
    CHECK(corpus_bleu(refs, refs).value == doctest::Approx(1.0));
    CHECK_THROWS_AS(corpus_bleu(hyps, {refs[0]}), InputError);
}

TEST_CASE("corpus BLEU agrees with the brute-force oracle") {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tokens> hyps, refs;
        for (int i = 0; i < 8; ++i) {
            refs.push_back(oracle::random_sentence(rng, 1, 12, 5, "w"));
            hyps.push_back(oracle::random_sentence(rng, 0, 12, 5, "w"));
        }
        CHECK(corpus_bleu(hyps, refs).value ==
              doctest::Approx(oracle::corpus_bleu(hyps, refs)).epsilon(1e-12));
    }
}

TEST_CASE("stats add across sentences") {
    BleuStats a = collect_stats(toks("a b c"), toks("a b d"));
    const BleuStats b = collect_stats(toks("x y"), toks("x y z"));
    a += b;
    CHECK(a.hyp_len == 5);
    CHECK(a.ref_len == 6);
    CHECK(a.matches[0] == 4);
    BleuStats other(2);
    CHECK_THROWS_AS(a += other, InputError);
}

TEST_CASE("paired bootstrap fixture and sanity") {
    const auto refs = oracle::split_all(oracle::kBootRefs);
    const auto a = oracle::split_all(oracle::kBootA);
    const auto b = oracle::split_all(oracle::kBootB);
    CHECK(paired_bootstrap(a, b, refs, 1000, 7).p_value == oracle::frozen::kBootAB);
    CHECK(paired_bootstrap(b, a, refs, 1000, 7).p_value == oracle::frozen::kBootBA);
    CHECK(paired_bootstrap(a, a, refs, 200, 1).p_value == 1.0);
    CHECK(paired_bootstrap(refs, a, refs, 200, 1).p_value == 0.0);
    const auto r = paired_bootstrap(a, b, refs, 50, 9);
    CHECK(r.n_resamples == 50);
    CHECK(r.seed == 9);
    CHECK(r.delta == doctest::Approx(corpus_bleu(a, refs).value - corpus_bleu(b, refs).value));
    CHECK(paired_bootstrap(a, b, refs, 300, 4).p_value ==
          paired_bootstrap(a, b, refs, 300, 4).p_value);
    CHECK_THROWS_AS(paired_bootstrap(a, b, refs, 0, 1), InputError);
}

}
