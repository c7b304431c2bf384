#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "drtt/backends.hpp"
#include "drtt/corpus.hpp"
#include "drtt/criteria.hpp"
#include "drtt/phrases.hpp"

namespace drtt {

/// What the replacement budget counts.
enum class BudgetUnit { segments, tokens };
/// Which segments compete at each step.
enum class SearchScope { global, left_to_right };

struct GenConfig {
    double beta = 0.5;
    double gamma = 0.5;
    double c = 0.2;
    std::size_t k = 1;
    std::size_t max_len = 4;
    SegmentStrategy strategy = SegmentStrategy::shortest;
    BudgetUnit budget_unit = BudgetUnit::segments;
    SearchScope search = SearchScope::global;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 0;

    void validate() const;
    CriterionConfig criterion() const;
};

/// Maximum number of replacements for a sentence with `n_segments`
/// segments and `n_tokens` tokens: ceil(units * c).
std::size_t replacement_budget(std::size_t n_segments, std::size_t n_tokens, const GenConfig &cfg);

struct TraceStep {
    std::size_t segment = 0;
    Tokens src_from;
    Tokens src_to;
    Tokens tgt_from;
    Tokens tgt_to;

    bool operator==(const TraceStep &) const = default;
};

struct Candidate {
    std::size_t pair_id = 0;
    Tokens x;
    Tokens y;
    Tokens x_delta;
    Tokens y_delta;
    RttScores scores;
    std::vector<TraceStep> trace;
    bool accepted = false;
};

enum class GenStatus { accepted, rejected, unusable, errored };

std::string_view to_string(GenStatus status);

struct GenOutcome {
    GenStatus status = GenStatus::rejected;
    Candidate candidate;
    /// False for rejections that never made a replacement (no scores exist).
    bool scored = false;
    std::string error;
};

/// Memo of sim(s, g(f(s))) keyed by the sentence.
using SimMemo = std::unordered_map<std::string, double>;

double reconstruction_similarity(const Tokens &sentence, const BackendHandle &fwd,
                                 const BackendHandle &bwd, SimMemo &memo);

struct Selection {
    std::size_t index = 0;
    Tokens phrase;
    double d_src = 0.0;
};

/// Picks the candidate phrase for `segment` of `x` whose substitution gives
/// the largest d_src(x, x with the substitution). Ties go to the earlier
/// (higher ranked) candidate. nullopt when every candidate is unusable.
std::optional<Selection> select_best_candidate(const Tokens &x, Span segment,
                                               const std::vector<Tokens> &candidates,
                                               const BackendHandle &fwd, const BackendHandle &bwd,
                                               SimMemo &memo, double epsilon = kDefaultEpsilon);

/// Generates one bilingual adversarial pair by greedy phrasal replacement
/// and filters it with the doubly round-trip criterion.
GenOutcome bil_adv_gen(const ParallelPair &pair, const PhraseMapping &mapping,
                       const Backends &backends, const GenConfig &cfg);

struct GenStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t unusable = 0;
    std::size_t errored = 0;
};

struct GenerationResult {
    std::vector<Candidate> accepted;
    /// Every scored candidate, accepted or not, in corpus order.
    std::vector<Candidate> all;
    GenStats stats;
};

using Mapper = std::function<PhraseMapping(const ParallelPair &)>;

/// Runs bil_adv_gen over the corpus on up to `workers` threads. Output
/// order follows the corpus regardless of scheduling.
GenerationResult generate_corpus(const Corpus &corpus, const Mapper &mapper,
                                 const Backends &backends, const GenConfig &cfg,
                                 std::size_t workers = 1);

/// Mapper that aligns each pair and segments it from extracted phrases.
Mapper make_mapper(BidirectionalAligner aligner, std::size_t max_len, SegmentStrategy strategy);

void write_candidates_jsonl(std::ostream &out, const std::vector<Candidate> &candidates);
std::vector<Candidate> read_candidates_jsonl(std::istream &in);

} // namespace drtt
