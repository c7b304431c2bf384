#include "drtt/phrases.hpp"

#include <algorithm>
#include <string>

#include "drtt/error.hpp"

namespace drtt {

bool is_consistent(const AlignmentMatrix &align, const SpanPair &phrase) {
    bool inside = false;
    for (const auto &[i, j] : align.links()) {
        const bool in_src = phrase.src.contains(i);
        const bool in_tgt = phrase.tgt.contains(j);
        if (in_src != in_tgt)
            return false;
        inside = inside || in_src;
    }
    return inside;
}

std::vector<SpanPair> extract_phrases(const ParallelPair &pair, const AlignmentMatrix &align,
                                      std::size_t max_len) {
    const std::size_t m = pair.src.tokens.size();
    const std::size_t n = pair.tgt.tokens.size();
    if (align.src_len() != m || align.tgt_len() != n)
        throw InputError("extract_phrases: alignment is " + std::to_string(align.src_len()) + "x" +
                         std::to_string(align.tgt_len()) + " but pair is " + std::to_string(m) +
                         "x" + std::to_string(n));
    if (max_len == 0)
        return {};

    std::vector<bool> tgt_aligned(n, false);
    for (const auto &[i, j] : align.links())
        tgt_aligned[j] = true;

    std::vector<SpanPair> out;
    for (std::size_t s_start = 0; s_start < m; ++s_start) {
        for (std::size_t s_end = s_start; s_end < std::min(m, s_start + max_len); ++s_end) {
            // Minimal target span covering the links of [s_start, s_end].
            std::size_t t_start = n, t_end = 0;
            bool any = false;
            for (const auto &[i, j] : align.links())
                if (i >= s_start && i <= s_end) {
                    t_start = std::min(t_start, j);
                    t_end = std::max(t_end, j);
                    any = true;
                }
            if (!any || t_end - t_start + 1 > max_len)
                continue;
            bool consistent = true;
            for (const auto &[i, j] : align.links())
                if (j >= t_start && j <= t_end && (i < s_start || i > s_end)) {
                    consistent = false;
                    break;
                }
            if (!consistent)
                continue;

            // Grow the target side over unaligned neighbours.
            for (std::size_t fs = t_start;;) {
                for (std::size_t fe = t_end;;) {
                    if (fe - fs + 1 <= max_len)
                        out.push_back({{s_start, s_end + 1}, {fs, fe + 1}});
                    ++fe;
                    if (fe >= n || tgt_aligned[fe] || fe - fs + 1 > max_len)
                        break;
                }
                if (fs == 0 || tgt_aligned[fs - 1] || t_end - (fs - 1) + 1 > max_len)
                    break;
                --fs;
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SegmentStrategy parse_strategy(std::string_view name) {
    if (name == "shortest")
        return SegmentStrategy::shortest;
    if (name == "longest")
        return SegmentStrategy::longest;
    throw InputError("unknown segmentation strategy '" + std::string(name) + "'");
}

std::size_t PhraseMapping::mapped_count() const {
    return static_cast<std::size_t>(
        std::count_if(targets.begin(), targets.end(), [](const auto &t) { return t.has_value(); }));
}

PhraseMapping build_mapping(const ParallelPair &pair, const std::vector<SpanPair> &phrases,
                            SegmentStrategy strategy) {
    const std::size_t m = pair.src.tokens.size();
    const std::size_t n = pair.tgt.tokens.size();
    PhraseMapping mapping;
    for (std::size_t pos = 0; pos < m;) {
        const SpanPair *best = nullptr;
        for (const auto &phrase : phrases) {
            if (phrase.src.start != pos || phrase.src.end > m || phrase.tgt.end > n ||
                phrase.src.size() == 0 || phrase.tgt.size() == 0)
                continue;
            if (!best) {
                best = &phrase;
                continue;
            }
            const auto a = phrase.src.size(), b = best->src.size();
            const bool better_src = strategy == SegmentStrategy::shortest ? a < b : a > b;
            if (better_src || (a == b && (phrase.tgt.size() < best->tgt.size() ||
                                          (phrase.tgt.size() == best->tgt.size() &&
                                           phrase.tgt.start < best->tgt.start))))
                best = &phrase;
        }
        if (best) {
            mapping.segments.push_back(best->src);
            mapping.targets.push_back(best->tgt);
            pos = best->src.end;
        } else {
            mapping.segments.push_back({pos, pos + 1});
            mapping.targets.push_back(std::nullopt);
            ++pos;
        }
    }
    return mapping;
}

void write_phrase_table(std::ostream &out, const std::vector<SpanPair> &phrases) {
    for (const auto &p : phrases)
        out << p.src.start << '\t' << p.src.end << '\t' << p.tgt.start << '\t' << p.tgt.end << '\n';
}

} // namespace drtt
