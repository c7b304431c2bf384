#include "drtt/metrics.hpp"

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>

#include "drtt/error.hpp"

namespace drtt {

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const Tokens &tokens, std::size_t order) {
    NgramCounts counts;
    if (tokens.size() < order)
        return counts;
    std::string key;
    for (std::size_t start = 0; start + order <= tokens.size(); ++start) {
        key.clear();
        for (std::size_t w = 0; w < order; ++w) {
            key += tokens[start + w];
            key.push_back('\x1f');
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

BleuStats::BleuStats(int max_order) : matches(max_order, 0), totals(max_order, 0) {}

BleuStats &BleuStats::operator+=(const BleuStats &other) {
    if (other.max_order() != max_order())
        throw InputError("cannot add BLEU statistics of different orders");
    for (int n = 0; n < max_order(); ++n) {
        matches[n] += other.matches[n];
        totals[n] += other.totals[n];
    }
    hyp_len += other.hyp_len;
    ref_len += other.ref_len;
    return *this;
}

BleuStats collect_stats(const Tokens &hyp, const Tokens &ref, int max_order) {
    if (max_order < 1)
        throw InputError("BLEU max_order must be >= 1");
    BleuStats stats(max_order);
    stats.hyp_len = hyp.size();
    stats.ref_len = ref.size();
    for (int n = 1; n <= max_order; ++n) {
        const auto hyp_counts = count_ngrams(hyp, n);
        const auto ref_counts = count_ngrams(ref, n);
        std::size_t clipped = 0;
        for (const auto &[gram, count] : hyp_counts) {
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end())
                clipped += std::min(count, it->second);
        }
        stats.matches[n - 1] = clipped;
        stats.totals[n - 1] = hyp.size() >= static_cast<std::size_t>(n) ? hyp.size() - n + 1 : 0;
    }
    return stats;
}

BleuScore score_stats(const BleuStats &stats, Smoothing smoothing) {
    const int order = stats.max_order();
    BleuScore score;
    score.hyp_len = stats.hyp_len;
    score.ref_len = stats.ref_len;
    score.precisions.assign(order, 0.0);
    if (stats.hyp_len == 0) {
        score.brevity_penalty = 0.0;
        return score;
    }

    bool zero = false;
    double log_sum = 0.0;
    for (int n = 0; n < order; ++n) {
        const double add = (smoothing == Smoothing::add_one_high_orders && n >= 1) ? 1.0 : 0.0;
        const double num = static_cast<double>(stats.matches[n]) + add;
        const double den = static_cast<double>(stats.totals[n]) + add;
        if (den == 0.0 || num == 0.0) {
            zero = true;
            continue;
        }
        score.precisions[n] = num / den;
        log_sum += std::log(num / den);
    }
    score.brevity_penalty =
        stats.hyp_len >= stats.ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len));
    score.value = zero ? 0.0 : score.brevity_penalty * std::exp(log_sum / order);
    return score;
}

BleuScore sentence_bleu(const Tokens &hyp, const Tokens &ref, int max_order, Smoothing smoothing) {
    if (ref.empty())
        throw InputError("sentence_bleu: empty reference");
    return score_stats(collect_stats(hyp, ref, max_order), smoothing);
}

BleuScore corpus_bleu(const std::vector<Tokens> &hyps, const std::vector<Tokens> &refs,
                      int max_order) {
    if (hyps.size() != refs.size())
        throw InputError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                         std::to_string(refs.size()) + " references");
    if (hyps.empty())
        throw InputError("corpus_bleu: empty corpus");
    BleuStats total(max_order);
    for (std::size_t i = 0; i < hyps.size(); ++i)
        total += collect_stats(hyps[i], refs[i], max_order);
    return score_stats(total, Smoothing::none);
}

SignificanceResult paired_bootstrap(const std::vector<Tokens> &hyps_a,
                                    const std::vector<Tokens> &hyps_b,
                                    const std::vector<Tokens> &refs, std::size_t n_resamples,
                                    std::uint64_t seed) {
    if (hyps_a.size() != refs.size() || hyps_b.size() != refs.size())
        throw InputError("paired_bootstrap: system outputs and references differ in length");
    if (refs.empty())
        throw InputError("paired_bootstrap: empty corpus");
    if (n_resamples < 1)
        throw InputError("paired_bootstrap: n_resamples must be >= 1");

    const std::size_t n = refs.size();
    std::vector<BleuStats> stats_a, stats_b;
    stats_a.reserve(n);
    stats_b.reserve(n);
    BleuStats full_a, full_b;
    for (std::size_t i = 0; i < n; ++i) {
        stats_a.push_back(collect_stats(hyps_a[i], refs[i]));
        stats_b.push_back(collect_stats(hyps_b[i], refs[i]));
        full_a += stats_a.back();
        full_b += stats_b.back();
    }

    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::size_t not_better = 0;
    for (std::size_t r = 0; r < n_resamples; ++r) {
        BleuStats sample_a, sample_b;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = rng() % n;
            sample_a += stats_a[idx];
            sample_b += stats_b[idx];
        }
        if (score_stats(sample_a, Smoothing::none).value <=
            score_stats(sample_b, Smoothing::none).value)
            ++not_better;
    }

    SignificanceResult result;
    result.p_value = static_cast<double>(not_better) / static_cast<double>(n_resamples);
    result.delta = score_stats(full_a, Smoothing::none).value -
                   score_stats(full_b, Smoothing::none).value;
    result.n_resamples = n_resamples;
    result.seed = seed;
    return result;
}

} // namespace drtt
