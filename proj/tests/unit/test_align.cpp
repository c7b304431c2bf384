#include <doctest.h>

#include <random>

#include "drtt/align.hpp"
#include "drtt/error.hpp"

#include "../support/oracles.hpp"
#include "../support/scratch.hpp"

using namespace drtt;
using oracle::toks;

namespace {

Corpus house_book() {
    return make_corpus({toks("the house"), toks("the book")}, {toks("das haus"), toks("das buch")},
                       "en", "de");
}

AlignmentMatrix links(std::size_t m, std::size_t n,
                      std::initializer_list<std::pair<std::size_t, std::size_t>> l) {
    AlignmentMatrix a(m, n);
    for (auto [i, j] : l)
        a.add(i, j);
    return a;
}

} // namespace

TEST_SUITE("align") {

TEST_CASE("plain IBM Model 1 matches the hand-computed EM fixture") {
    const AlignConfig cfg{10, 0.0, 0.0};
    const auto model = train_ibm1(house_book(), cfg);
    const auto &lex = model.lexicon;
    using namespace oracle::frozen;
    CHECK(lex.prob("the", "das") == doctest::Approx(kEmDasThe).epsilon(1e-9));
    CHECK(lex.prob("the", "haus") == doctest::Approx(kEmNounThe).epsilon(1e-9));
    CHECK(lex.prob("the", "buch") == doctest::Approx(kEmNounThe).epsilon(1e-9));
    CHECK(lex.prob("house", "haus") == doctest::Approx(kEmNounNoun).epsilon(1e-9));
    CHECK(lex.prob("book", "buch") == doctest::Approx(kEmNounNoun).epsilon(1e-9));
    CHECK(lex.prob("house", "das") == doctest::Approx(kEmDasNoun).epsilon(1e-9));
    CHECK(lex.prob("house", "buch") == kUnknownFloor);
    CHECK(lex.prob("nothing", "haus") == kUnknownFloor);
    CHECK(model.log_likelihood.size() == 11);
    for (const auto &pair : house_book().pairs)
        CHECK(viterbi_align(pair, lex, cfg) == links(2, 2, {{0, 0}, {1, 1}}));
}

TEST_CASE("trained rows are distributions and the likelihood never decreases") {
    std::mt19937 rng(3);
    std::vector<Tokens> src, tgt;
    for (int i = 0; i < 12; ++i) {
        src.push_back(oracle::random_sentence(rng, 1, 7, 6, "e"));
        tgt.push_back(oracle::random_sentence(rng, 1, 7, 6, "f"));
    }
    const auto corpus = make_corpus(src, tgt, "en", "de");
    for (const AlignConfig cfg : {AlignConfig{}, AlignConfig{6, 0.0, 0.0}, AlignConfig{6, 8.0, 0.2}}) {
        const auto model = train_ibm1(corpus, cfg);
        CHECK(model.lexicon.max_row_deviation() < 1e-9);
        REQUIRE(model.log_likelihood.size() == static_cast<std::size_t>(cfg.iterations) + 1);
        for (std::size_t i = 1; i < model.log_likelihood.size(); ++i)
            CHECK(model.log_likelihood[i] >= model.log_likelihood[i - 1] - 1e-9);
        CHECK(corpus_log_likelihood(corpus, model.lexicon, cfg) ==
              doctest::Approx(model.log_likelihood.back()).epsilon(1e-9));
    }
}

TEST_CASE("null token is trained only when p_null > 0") {
    const auto with_null = train_ibm1(house_book(), AlignConfig{});
    CHECK(with_null.lexicon.src_vocab().count(std::string(kNullToken)) == 1);
    const auto without = train_ibm1(house_book(), AlignConfig{5, 4.0, 0.0});
    CHECK(without.lexicon.src_vocab().count(std::string(kNullToken)) == 0);
}

TEST_CASE("invalid training input") {
    CHECK_THROWS_AS(train_ibm1(Corpus{}, AlignConfig{}), InputError);
    CHECK_THROWS_AS(train_ibm1(house_book(), AlignConfig{0, 4.0, 0.08}), InputError);
    CHECK_THROWS_AS(train_ibm1(house_book(), AlignConfig{5, -1.0, 0.08}), InputError);
    CHECK_THROWS_AS(train_ibm1(house_book(), AlignConfig{5, 4.0, 1.0}), InputError);
}

TEST_CASE("viterbi ties go to the smaller source index; null wins only outright") {
    LexiconTable lex;
    lex.set("a", "x", 0.5);
    lex.set("b", "x", 0.5);
    const ParallelPair pair{{{"a", "b"}, "en"}, {{"x"}, "de"}, 0};
    CHECK(viterbi_align(pair, lex, AlignConfig{1, 0.0, 0.0}) == links(2, 1, {{0, 0}}));

    // Prior mass per source word is (1 - 0.5) / 2 = 0.25; null gets 0.5.
    LexiconTable with_null = lex;
    with_null.set(std::string(kNullToken), "x", 0.25);
    CHECK(viterbi_align(pair, with_null, AlignConfig{1, 0.0, 0.5}) == links(2, 1, {{0, 0}}));
    with_null.set(std::string(kNullToken), "x", 0.3);
    CHECK(viterbi_align(pair, with_null, AlignConfig{1, 0.0, 0.5}).empty());
}

TEST_CASE("symmetrization heuristics on hand-worked examples") {
    // fwd and the transposed reverse alignment, both in (src, tgt) coordinates
    const auto fwd = links(3, 3, {{0, 0}, {1, 1}, {2, 1}});
    const auto back = links(3, 3, {{0, 0}, {1, 1}, {2, 2}});
    const auto rev = back.transposed();
    CHECK(symmetrize(fwd, rev, SymmetrizeHeuristic::intersection) ==
          links(3, 3, {{0, 0}, {1, 1}}));
    CHECK(symmetrize(fwd, rev, SymmetrizeHeuristic::union_) ==
          links(3, 3, {{0, 0}, {1, 1}, {2, 1}, {2, 2}}));
    CHECK(symmetrize(fwd, rev, SymmetrizeHeuristic::grow_diag_final_and) ==
          links(3, 3, {{0, 0}, {1, 1}, {2, 1}, {2, 2}}));

    // An isolated forward link is added by final-and when both words are free.
    CHECK(symmetrize(links(4, 4, {{0, 0}, {3, 3}}), links(4, 4, {{0, 0}}).transposed(),
                     SymmetrizeHeuristic::grow_diag_final_and) ==
          links(4, 4, {{0, 0}, {3, 3}}));
    // ...but not when one side is already aligned.
    CHECK(symmetrize(links(4, 4, {{0, 0}, {2, 0}}), links(4, 4, {{0, 0}}).transposed(),
                     SymmetrizeHeuristic::grow_diag_final_and) ==
          links(4, 4, {{0, 0}}));
    // Growth follows diagonal neighbours through the union.
    CHECK(symmetrize(links(3, 3, {{0, 0}, {1, 1}, {2, 2}}), links(3, 3, {{0, 0}}).transposed(),
                     SymmetrizeHeuristic::grow_diag_final_and) ==
          links(3, 3, {{0, 0}, {1, 1}, {2, 2}}));

    CHECK_THROWS_AS(symmetrize(links(2, 3, {}), links(2, 3, {}),
                               SymmetrizeHeuristic::intersection),
                    InputError);
}

TEST_CASE("grow-diag-final-and lies between intersection and union") {
    std::mt19937 rng(8);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + trial % 6, n = 1 + (trial / 6) % 6;
        AlignmentMatrix f(m, n), r(n, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (coin(rng))
                    f.add(i, j);
                if (coin(rng))
                    r.add(j, i);
            }
        const auto inter = symmetrize(f, r, SymmetrizeHeuristic::intersection);
        const auto uni = symmetrize(f, r, SymmetrizeHeuristic::union_);
        const auto gdfa = symmetrize(f, r, SymmetrizeHeuristic::grow_diag_final_and);
        for (const auto &l : inter.links())
            CHECK(gdfa.contains(l.first, l.second));
        for (const auto &l : gdfa.links())
            CHECK(uni.contains(l.first, l.second));
    }
}

TEST_CASE("Pharaoh format round-trips and rejects malformed items") {
    const auto a = links(3, 4, {{0, 1}, {2, 3}, {1, 0}});
    CHECK(write_pharaoh(a) == "0-1 1-0 2-3");
    CHECK(read_pharaoh(write_pharaoh(a), 3, 4) == a);
    CHECK(read_pharaoh("", 2, 2).empty());
    CHECK_THROWS_AS(read_pharaoh("0-1 x", 2, 2), InputError);
    CHECK_THROWS_AS(read_pharaoh("0-", 2, 2), InputError);
    CHECK_THROWS_AS(read_pharaoh("0--1", 2, 2), InputError);
    CHECK_THROWS_AS(read_pharaoh("2-0", 2, 2), InputError);
    CHECK_THROWS_AS(AlignmentMatrix(1, 1).add(0, 1), InputError);
}

TEST_CASE("lexicon TSV round-trip is exact") {
    const auto model = train_ibm1(house_book(), AlignConfig{});
    auto dir = scratch::dir("align_lexicon");
    model.lexicon.write_tsv(dir / "lex.tsv");
    const auto back = LexiconTable::read_tsv(dir / "lex.tsv");
    CHECK(back.entries() == model.lexicon.entries());
    scratch::write(dir / "bad.tsv", "a\tb\n");
    CHECK_THROWS_AS(LexiconTable::read_tsv(dir / "bad.tsv"), InputError);
    CHECK_THROWS_AS(LexiconTable().set("a", "b", -0.1), InputError);
}

TEST_CASE("bidirectional aligner recovers a clean one-to-one corpus") {
    std::vector<Tokens> src, tgt;
    const std::vector<std::pair<std::string, std::string>> words = {
        {"the", "das"}, {"house", "haus"}, {"book", "buch"}, {"small", "klein"},
        {"is", "ist"},  {"red", "rot"}};
    std::mt19937 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(2, 5);
    for (int i = 0; i < 60; ++i) {
        Tokens s, t;
        for (std::size_t k = len(rng); k > 0; --k) {
            const auto &w = words[pick(rng)];
            s.push_back(w.first);
            t.push_back(w.second);
        }
        src.push_back(s);
        tgt.push_back(t);
    }
    const auto corpus = make_corpus(src, tgt, "en", "de");
    const auto aligner = train_aligner(corpus, AlignConfig{});
    const ParallelPair pair{{toks("the small house is red"), "en"},
                            {toks("das klein haus ist rot"), "de"}, 0};
    CHECK(aligner.align(pair) == links(5, 5, {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}}));
    CHECK(reversed(corpus).pairs[0].src == corpus.pairs[0].tgt);
}

}
