#include <doctest.h>

#include <sstream>

#include "drtt/advgen.hpp"
#include "drtt/error.hpp"

#include "../support/oracles.hpp"
#include "../support/world.hpp"

using namespace drtt;
using namespace oracle;

namespace {

const auto kSelFwd =
    with(kFwd, {{"light", "dunkel"}, {"dark", "dunkel"}, {"small", "klein"}});
const auto kSelBwd = with(inverse(kFwd), {{"dunkel", "dark"}, {"klein", "small"}});

Backends box_backends(PhraseTable mlm) {
    PhraseTable tmlm;
    for (const auto &[s, t] : kSelFwd)
        tmlm[{s}] = {{t}};
    return Backends{dict(table(kSelFwd), Direction::src2tgt),
                    dict(table(kSelBwd), Direction::tgt2src),
                    BackendHandle(BackendKind::mmlm, std::nullopt, "mlm",
                                  std::make_shared<TableMlm>(std::move(mlm))),
                    BackendHandle(BackendKind::tmlm, std::nullopt, "tmlm",
                                  std::make_shared<TableTmlm>(std::move(tmlm)))};
}

ParallelPair box_pair() {
    return ParallelPair{{kX, "en"}, {kY, "de"}, 0};
}

/// Independent round-trip score using the oracle BLEU and plain table lookups.
double oracle_d_src(const Tokens &x, const Tokens &xd) {
    auto apply = [](const std::vector<std::pair<std::string, std::string>> &t, const Tokens &s) {
        Tokens out;
        for (const auto &w : s) {
            auto it = std::find_if(t.begin(), t.end(), [&](const auto &e) { return e.first == w; });
            out.push_back(it == t.end() ? w : it->second);
        }
        return out;
    };
    const double a = oracle::sentence_bleu(apply(kSelBwd, apply(kSelFwd, x)), x);
    const double b = oracle::sentence_bleu(apply(kSelBwd, apply(kSelFwd, xd)), xd);
    return (a - b) / a;
}

} // namespace

TEST_SUITE("advgen") {

TEST_CASE("replacement budget is the ceiling of units times c") {
    GenConfig cfg;
    CHECK(replacement_budget(6, 9, cfg) == 2);
    CHECK(replacement_budget(5, 9, cfg) == 1);
    CHECK(replacement_budget(1, 1, cfg) == 1);
    CHECK(replacement_budget(0, 0, cfg) == 0);
    cfg.budget_unit = BudgetUnit::tokens;
    CHECK(replacement_budget(6, 15, cfg) == 3);
    CHECK(replacement_budget(6, 16, cfg) == 4);
    cfg.c = 1.0;
    CHECK(replacement_budget(6, 7, cfg) == 7);
}

TEST_CASE("configuration validation") {
    GenConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.c = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = {};
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = {};
    cfg.max_len = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("candidate selection maximizes the source drop") {
    auto b = box_backends({});
    SimMemo memo;
    auto sel = select_best_candidate(kX, Span{3, 4}, {toks("small"), toks("light")}, b.fwd, b.bwd,
                                     memo);
    REQUIRE(sel);
    CHECK(sel->index == 1);
    CHECK(sel->phrase == toks("light"));
    CHECK(sel->d_src == doctest::Approx(frozen::kAuthDSrc).epsilon(1e-12));

    auto only_small = select_best_candidate(kX, Span{3, 4}, {toks("small")}, b.fwd, b.bwd, memo);
    REQUIRE(only_small);
    CHECK(only_small->d_src == doctest::Approx(0.0));

    // Equal scores keep the higher ranked candidate.
    auto tie = select_best_candidate(kX, Span{3, 4}, {toks("small"), toks("small")}, b.fwd, b.bwd,
                                     memo);
    CHECK(tie->index == 0);
    CHECK_FALSE(select_best_candidate(kX, Span{3, 4}, {}, b.fwd, b.bwd, memo));
}

TEST_CASE("authentic replacement is accepted with a synchronized target") {
    auto b = box_backends({{toks("huge"), {toks("small"), toks("light")}}});
    GenConfig cfg;
    cfg.k = 2;
    auto out = bil_adv_gen(box_pair(), world::diagonal_mapper()(box_pair()), b, cfg);
    REQUIRE(out.status == GenStatus::accepted);
    CHECK(out.scored);
    const auto &c = out.candidate;
    CHECK(c.accepted);
    CHECK(c.x_delta == kXDelta);
    CHECK(c.y_delta == toks("die kiste ist dunkel und rot"));
    REQUIRE(c.trace.size() == 1);
    CHECK(c.trace[0] == TraceStep{3, toks("huge"), toks("light"), toks("riesig"), toks("dunkel")});
    CHECK(c.scores.d_src == doctest::Approx(frozen::kAuthDSrc).epsilon(1e-12));
    CHECK(c.scores.d_tgt == doctest::Approx(0.0));

    // With k = 1 only the top candidate is seen, and it preserves the round trip.
    cfg.k = 1;
    out = bil_adv_gen(box_pair(), world::diagonal_mapper()(box_pair()), b, cfg);
    CHECK(out.status == GenStatus::rejected);
    CHECK(out.candidate.x_delta == toks("the box is small and red"));
    CHECK(out.candidate.scores.d_src == doctest::Approx(0.0));
}

TEST_CASE("search scope orders the replacements and scores restart from x") {
    PhraseTable mlm = {{toks("box"), {toks("small")}}, {toks("huge"), {toks("light")}}};
    auto b = box_backends(mlm);
    GenConfig cfg;
    cfg.beta = -1.0;
    cfg.gamma = 1.0;
    auto global = bil_adv_gen(box_pair(), world::diagonal_mapper()(box_pair()), b, cfg);
    REQUIRE(global.candidate.trace.size() == 2);
    CHECK(global.candidate.trace[0].segment == 3);
    CHECK(global.candidate.trace[1].segment == 1);

    cfg.search = SearchScope::left_to_right;
    auto ltr = bil_adv_gen(box_pair(), world::diagonal_mapper()(box_pair()), b, cfg);
    REQUIRE(ltr.candidate.trace.size() == 2);
    CHECK(ltr.candidate.trace[0].segment == 1);
    CHECK(ltr.candidate.trace[1].segment == 3);

    const Tokens both = toks("the small is light and red");
    CHECK(global.candidate.x_delta == both);
    CHECK(ltr.candidate.x_delta == both);
    CHECK(global.candidate.scores.d_src == doctest::Approx(oracle_d_src(kX, both)));
}

TEST_CASE("outcome statuses") {
    GenConfig cfg;
    auto mapping = world::diagonal_mapper()(box_pair());

    auto none = bil_adv_gen(box_pair(), mapping, box_backends({}), cfg);
    CHECK(none.status == GenStatus::rejected);
    CHECK_FALSE(none.scored);
    CHECK(none.candidate.trace.empty());

    auto b = box_backends({{toks("huge"), {toks("light")}}});
    b.bwd = translator(std::make_shared<LossyTranslator>(table(kSelBwd),
                                                         std::set<std::string>{
                                                             "the", "box", "is", "huge", "and",
                                                             "red", "dark", "small"}),
                       Direction::tgt2src);
    CHECK(bil_adv_gen(box_pair(), mapping, b, cfg).status == GenStatus::unusable);

    class BrokenFill : public Provider {
      public:
        FillOutcome fill(const FillRequest &) override { return FillOutcome::failure("oom"); }
        std::string describe() const override { return "broken"; }
    };
    b = box_backends({});
    b.mmlm = BackendHandle(BackendKind::mmlm, std::nullopt, "x", std::make_shared<BrokenFill>());
    auto err = bil_adv_gen(box_pair(), mapping, b, cfg);
    CHECK(err.status == GenStatus::errored);
    CHECK(err.error.find("M-MLM") != std::string::npos);

    PhraseMapping partial = mapping;
    partial.segments.pop_back();
    partial.targets.pop_back();
    CHECK_THROWS_AS(bil_adv_gen(box_pair(), partial, box_backends({}), cfg), InputError);
}

TEST_CASE("unmapped segments are never attacked") {
    auto b = box_backends({{toks("huge"), {toks("light")}}});
    auto mapping = world::diagonal_mapper()(box_pair());
    mapping.targets[3].reset();
    auto out = bil_adv_gen(box_pair(), mapping, b, GenConfig{});
    CHECK(out.candidate.trace.empty());
}

TEST_CASE("corpus generation is independent of the worker count") {
    auto w = world::make_world(11, 80);
    GenConfig cfg;
    auto one = generate_corpus(w.corpus, world::diagonal_mapper(), w.backends(), cfg, 1);
    auto four = generate_corpus(w.corpus, world::diagonal_mapper(), w.backends(), cfg, 4);
    CHECK(one.stats.accepted + one.stats.rejected + one.stats.unusable + one.stats.errored ==
          w.corpus.size());
    CHECK(one.stats.accepted > 0);
    CHECK(one.stats.accepted == four.stats.accepted);
    REQUIRE(one.all.size() == four.all.size());
    for (std::size_t i = 0; i < one.all.size(); ++i) {
        CHECK(one.all[i].pair_id == four.all[i].pair_id);
        CHECK(one.all[i].x_delta == four.all[i].x_delta);
        CHECK(one.all[i].scores.d_src == four.all[i].scores.d_src);
        if (i > 0)
            CHECK(one.all[i - 1].pair_id < one.all[i].pair_id);
    }
    for (const auto &c : one.accepted) {
        CHECK(c.accepted);
        CHECK(drtt_accept(c.scores, cfg.criterion()));
    }
}

TEST_CASE("candidates survive a JSONL round trip") {
    auto w = world::make_world(5, 20);
    auto gen = generate_corpus(w.corpus, world::diagonal_mapper(), w.backends(), GenConfig{}, 2);
    REQUIRE_FALSE(gen.all.empty());
    std::stringstream buf;
    write_candidates_jsonl(buf, gen.all);
    auto back = read_candidates_jsonl(buf);
    REQUIRE(back.size() == gen.all.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].pair_id == gen.all[i].pair_id);
        CHECK(back[i].x == gen.all[i].x);
        CHECK(back[i].y_delta == gen.all[i].y_delta);
        CHECK(back[i].trace == gen.all[i].trace);
        CHECK(back[i].accepted == gen.all[i].accepted);
        CHECK(back[i].scores.d_src == gen.all[i].scores.d_src);
        CHECK(back[i].scores.d_tgt == gen.all[i].scores.d_tgt);
        CHECK(back[i].y == gen.all[i].y);
    }
    std::stringstream bad("{\"pair_id\": 1}\n");
    CHECK_THROWS_AS(read_candidates_jsonl(bad), InputError);
}

}
