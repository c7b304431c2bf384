#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drtt/corpus.hpp"

namespace drtt {

enum class Smoothing { none, add_one_high_orders };

struct BleuScore {
    double value = 0.0;
    std::vector<double> precisions;
    double brevity_penalty = 1.0;
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;
};

/// Sufficient statistics for BLEU: clipped matches and hypothesis n-gram
/// counts per order, plus lengths. Statistics add across sentences.
struct BleuStats {
    std::vector<std::size_t> matches;
    std::vector<std::size_t> totals;
    std::size_t hyp_len = 0;
    std::size_t ref_len = 0;

    explicit BleuStats(int max_order = 4);
    int max_order() const { return static_cast<int>(matches.size()); }
    BleuStats &operator+=(const BleuStats &other);
};

BleuStats collect_stats(const Tokens &hyp, const Tokens &ref, int max_order = 4);
BleuScore score_stats(const BleuStats &stats, Smoothing smoothing);

/// Sentence-level BLEU in [0,1]. Throws InputError on an empty reference.
BleuScore sentence_bleu(const Tokens &hyp, const Tokens &ref, int max_order = 4,
                        Smoothing smoothing = Smoothing::add_one_high_orders);

/// Micro-averaged, unsmoothed corpus BLEU (multi-bleu style).
BleuScore corpus_bleu(const std::vector<Tokens> &hyps, const std::vector<Tokens> &refs,
                      int max_order = 4);

struct SignificanceResult {
    double p_value = 1.0;
    double delta = 0.0;
    std::size_t n_resamples = 0;
    std::uint64_t seed = 0;
};

/// Paired bootstrap resampling. p_value is the fraction of resamples in which
/// system A does not score strictly above system B. Sentence indices are drawn
/// as `mt19937(seed)() % n`, so results are reproducible across platforms.
SignificanceResult paired_bootstrap(const std::vector<Tokens> &hyps_a,
                                    const std::vector<Tokens> &hyps_b,
                                    const std::vector<Tokens> &refs, std::size_t n_resamples,
                                    std::uint64_t seed);

} // namespace drtt
