#include "drtt/advgen.hpp"

#include <atomic>
#include <cmath>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "drtt/error.hpp"

namespace drtt {

void GenConfig::validate() const {
    if (!(c > 0.0 && c <= 1.0))
        throw InputError("replacement ratio c must lie in (0, 1]");
    if (k < 1)
        throw InputError("candidate count k must be >= 1");
    if (max_len < 1)
        throw InputError("max phrase length must be >= 1");
    if (!(epsilon > 0.0))
        throw InputError("denominator epsilon must be > 0");
}

CriterionConfig GenConfig::criterion() const {
    CriterionConfig cfg;
    cfg.beta = beta;
    cfg.gamma = gamma;
    cfg.epsilon_denominator = epsilon;
    return cfg;
}

std::size_t replacement_budget(std::size_t n_segments, std::size_t n_tokens, const GenConfig &cfg) {
    const auto units = static_cast<double>(cfg.budget_unit == BudgetUnit::segments ? n_segments
                                                                                    : n_tokens);
    // The slack keeps products such as 15 * 0.2 = 3.0000000000000004 at 3.
    return static_cast<std::size_t>(std::ceil(units * cfg.c - 1e-9));
}

std::string_view to_string(GenStatus status) {
    switch (status) {
    case GenStatus::accepted:
        return "accepted";
    case GenStatus::rejected:
        return "rejected";
    case GenStatus::unusable:
        return "unusable";
    case GenStatus::errored:
        return "errored";
    }
    return "?";
}

namespace {

Tokens splice(const Tokens &tokens, Span span, const Tokens &replacement) {
    Tokens out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(span.start));
    out.insert(out.end(), replacement.begin(), replacement.end());
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(span.end), tokens.end());
    return out;
}

Tokens slice(const Tokens &tokens, Span span) {
    return Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                  tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
}

Span shifted(Span span, std::ptrdiff_t delta) {
    return {static_cast<std::size_t>(static_cast<std::ptrdiff_t>(span.start) + delta),
            static_cast<std::size_t>(static_cast<std::ptrdiff_t>(span.end) + delta)};
}

struct SegmentState {
    Span src;
    std::optional<Span> tgt;
    bool attacked = false;
};

} // namespace

double reconstruction_similarity(const Tokens &sentence, const BackendHandle &fwd,
                                 const BackendHandle &bwd, SimMemo &memo) {
    const std::string key = detokenize(sentence);
    if (auto it = memo.find(key); it != memo.end())
        return it->second;
    const double sim = similarity(translate_one(bwd, translate_one(fwd, sentence)), sentence);
    memo.emplace(key, sim);
    return sim;
}

std::optional<Selection> select_best_candidate(const Tokens &x, Span segment,
                                               const std::vector<Tokens> &candidates,
                                               const BackendHandle &fwd, const BackendHandle &bwd,
                                               SimMemo &memo, double epsilon) {
    if (candidates.empty())
        return std::nullopt;
    const double base = reconstruction_similarity(x, fwd, bwd, memo);
    if (base < epsilon)
        return std::nullopt;

    std::vector<Tokens> variants;
    variants.reserve(candidates.size());
    for (const auto &candidate : candidates)
        variants.push_back(splice(x, segment, candidate));
    const auto reconstructions = translate_all(bwd, translate_all(fwd, variants));

    std::optional<Selection> best;
    for (std::size_t j = 0; j < variants.size(); ++j) {
        const double sim = similarity(reconstructions[j], variants[j]);
        memo.emplace(detokenize(variants[j]), sim);
        const double score = *d_src(base, sim, epsilon);
        if (!best || score > best->d_src)
            best = Selection{j, candidates[j], score};
    }
    return best;
}

GenOutcome bil_adv_gen(const ParallelPair &pair, const PhraseMapping &mapping,
                       const Backends &backends, const GenConfig &cfg) {
    cfg.validate();
    const Tokens &x = pair.src.tokens;
    const Tokens &y = pair.tgt.tokens;

    GenOutcome outcome;
    Candidate &cand = outcome.candidate;
    cand.pair_id = pair.id;
    cand.x = x;
    cand.y = y;
    cand.x_delta = x;
    cand.y_delta = y;

    std::vector<SegmentState> segments;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        const Span src = mapping.segments[i];
        const auto &tgt = mapping.targets[i];
        if (src.start != covered || src.end <= src.start || src.end > x.size() ||
            (tgt && (tgt->end <= tgt->start || tgt->end > y.size())))
            throw InputError("phrase mapping does not fit pair " + std::to_string(pair.id));
        covered = src.end;
        segments.push_back({src, tgt, false});
    }
    if (covered != x.size())
        throw InputError("phrase mapping does not cover pair " + std::to_string(pair.id));

    const std::size_t budget = replacement_budget(segments.size(), x.size(), cfg);
    SimMemo memo;
    Tokens &x_cur = cand.x_delta;
    Tokens &y_cur = cand.y_delta;

    try {
        if (reconstruction_similarity(x, backends.fwd, backends.bwd, memo) < cfg.epsilon) {
            outcome.status = GenStatus::unusable;
            return outcome;
        }

        for (std::size_t step = 0; step < budget; ++step) {
            std::optional<std::pair<std::size_t, Selection>> best;
            for (std::size_t s = 0; s < segments.size(); ++s) {
                auto &seg = segments[s];
                if (seg.attacked || !seg.tgt)
                    continue;
                FillRequest request;
                request.tokens = x_cur;
                request.mask_start = seg.src.start;
                request.mask_end = seg.src.end;
                request.k = cfg.k;
                auto filled = backends.mmlm.fill(request);
                if (!filled.ok())
                    throw BackendError("M-MLM failed: " + filled.error);
                const Tokens original = slice(x_cur, seg.src);
                std::vector<Tokens> options;
                for (auto &c : *filled.value)
                    if (!c.tokens.empty() && c.tokens != original)
                        options.push_back(std::move(c.tokens));
                auto selection = select_best_candidate(x_cur, seg.src, options, backends.fwd,
                                                       backends.bwd, memo, cfg.epsilon);
                if (!selection) {
                    if (cfg.search == SearchScope::left_to_right)
                        seg.attacked = true;
                    continue;
                }
                if (!best || selection->d_src > best->second.d_src)
                    best = std::make_pair(s, std::move(*selection));
                if (cfg.search == SearchScope::left_to_right)
                    break;
            }
            if (!best)
                break;

            // Commit the source replacement.
            auto &seg = segments[best->first];
            TraceStep trace{best->first, slice(x_cur, seg.src), best->second.phrase, {}, {}};
            const Span old_src = seg.src;
            const auto src_delta = static_cast<std::ptrdiff_t>(trace.src_to.size()) -
                                   static_cast<std::ptrdiff_t>(old_src.size());
            x_cur = splice(x_cur, old_src, trace.src_to);
            seg.src = {old_src.start, old_src.start + trace.src_to.size()};
            for (auto &other : segments)
                if (&other != &seg && other.src.start >= old_src.end)
                    other.src = shifted(other.src, src_delta);
            seg.attacked = true;

            // Re-synchronize the aligned target phrase.
            const Span old_tgt = *seg.tgt;
            trace.tgt_from = slice(y_cur, old_tgt);
            trace.tgt_to = trace.tgt_from;
            FillRequest request;
            request.context_src = x_cur;
            request.tokens = y_cur;
            request.mask_start = old_tgt.start;
            request.mask_end = old_tgt.end;
            request.k = 1;
            auto filled = backends.tmlm.fill(request);
            if (!filled.ok())
                throw BackendError("T-MLM failed: " + filled.error);
            if (!filled.value->empty() && !filled.value->front().tokens.empty()) {
                trace.tgt_to = filled.value->front().tokens;
                const Span new_tgt{old_tgt.start, old_tgt.start + trace.tgt_to.size()};
                const auto tgt_delta = static_cast<std::ptrdiff_t>(new_tgt.size()) -
                                       static_cast<std::ptrdiff_t>(old_tgt.size());
                y_cur = splice(y_cur, old_tgt, trace.tgt_to);
                for (auto &other : segments) {
                    if (!other.tgt)
                        continue;
                    if (*other.tgt == old_tgt)
                        other.tgt = new_tgt;
                    else if (other.tgt->start >= old_tgt.end)
                        other.tgt = shifted(*other.tgt, tgt_delta);
                    else if (other.tgt->end > old_tgt.start)
                        other.tgt.reset(); // partial overlap: no longer synchronizable
                }
            }
            cand.trace.push_back(std::move(trace));
        }

        if (cand.trace.empty()) {
            outcome.status = GenStatus::rejected;
            return outcome;
        }

        const auto scored = score_pair(x, y, x_cur, backends.fwd, backends.bwd, cfg.epsilon);
        if (scored.status == ScoreStatus::unusable) {
            outcome.status = GenStatus::unusable;
            return outcome;
        }
        cand.scores = scored.scores;
        cand.accepted = drtt_accept(cand.scores, cfg.criterion());
        outcome.scored = true;
        outcome.status = cand.accepted ? GenStatus::accepted : GenStatus::rejected;
    } catch (const BackendError &e) {
        outcome.status = GenStatus::errored;
        outcome.error = e.what();
        outcome.scored = false;
    }
    return outcome;
}

GenerationResult generate_corpus(const Corpus &corpus, const Mapper &mapper,
                                 const Backends &backends, const GenConfig &cfg,
                                 std::size_t workers) {
    cfg.validate();
    std::vector<GenOutcome> outcomes(corpus.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < corpus.size(); i = next++) {
            const auto &pair = corpus.pairs[i];
            try {
                outcomes[i] = bil_adv_gen(pair, mapper(pair), backends, cfg);
            } catch (const Error &e) {
                outcomes[i].status = GenStatus::errored;
                outcomes[i].error = e.what();
                outcomes[i].candidate.pair_id = pair.id;
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, corpus.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }

    GenerationResult result;
    for (auto &outcome : outcomes) {
        switch (outcome.status) {
        case GenStatus::accepted:
            ++result.stats.accepted;
            result.accepted.push_back(outcome.candidate);
            break;
        case GenStatus::rejected:
            ++result.stats.rejected;
            break;
        case GenStatus::unusable:
            ++result.stats.unusable;
            break;
        case GenStatus::errored:
            ++result.stats.errored;
            break;
        }
        if (outcome.scored)
            result.all.push_back(std::move(outcome.candidate));
    }
    return result;
}

Mapper make_mapper(BidirectionalAligner aligner, std::size_t max_len, SegmentStrategy strategy) {
    return [aligner = std::move(aligner), max_len, strategy](const ParallelPair &pair) {
        const auto alignment = aligner.align(pair);
        return build_mapping(pair, extract_phrases(pair, alignment, max_len), strategy);
    };
}

void write_candidates_jsonl(std::ostream &out, const std::vector<Candidate> &candidates) {
    using OJson = nlohmann::ordered_json;
    for (const auto &c : candidates) {
        OJson trace = OJson::array();
        for (const auto &t : c.trace)
            trace.push_back({{"i", t.segment},
                             {"src_from", detokenize(t.src_from)},
                             {"src_to", detokenize(t.src_to)},
                             {"tgt_from", detokenize(t.tgt_from)},
                             {"tgt_to", detokenize(t.tgt_to)}});
        OJson record = {{"id", c.pair_id},
                        {"x", detokenize(c.x)},
                        {"y", detokenize(c.y)},
                        {"x_delta", detokenize(c.x_delta)},
                        {"y_delta", detokenize(c.y_delta)},
                        {"d_src", c.scores.d_src},
                        {"d_tgt", c.scores.d_tgt},
                        {"accepted", c.accepted},
                        {"trace", trace}};
        out << record.dump() << '\n';
    }
}

std::vector<Candidate> read_candidates_jsonl(std::istream &in) {
    std::vector<Candidate> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Candidate c;
            c.pair_id = j.at("id").get<std::size_t>();
            c.x = tokenize(j.at("x").get<std::string>());
            c.y = tokenize(j.at("y").get<std::string>());
            c.x_delta = tokenize(j.at("x_delta").get<std::string>());
            c.y_delta = tokenize(j.at("y_delta").get<std::string>());
            c.scores.d_src = j.at("d_src").get<double>();
            c.scores.d_tgt = j.at("d_tgt").get<double>();
            c.accepted = j.at("accepted").get<bool>();
            for (const auto &t : j.value("trace", nlohmann::json::array()))
                c.trace.push_back({t.at("i").get<std::size_t>(),
                                   tokenize(t.at("src_from").get<std::string>()),
                                   tokenize(t.at("src_to").get<std::string>()),
                                   tokenize(t.at("tgt_from").get<std::string>()),
                                   tokenize(t.at("tgt_to").get<std::string>())});
            out.push_back(std::move(c));
        } catch (const nlohmann::json::exception &e) {
            throw InputError("candidates line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

} // namespace drtt
