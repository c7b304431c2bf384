#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "drtt/align.hpp"
#include "drtt/corpus.hpp"

namespace drtt {

/// Half-open token range [start, end).
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool contains(std::size_t i) const { return i >= start && i < end; }
    auto operator<=>(const Span &) const = default;
};

struct SpanPair {
    Span src;
    Span tgt;

    auto operator<=>(const SpanPair &) const = default;
};

/// All phrase pairs (each side at most max_len tokens) consistent with the
/// alignment, sorted by (src, tgt).
std::vector<SpanPair> extract_phrases(const ParallelPair &pair, const AlignmentMatrix &align,
                                      std::size_t max_len = 4);

/// True when no link crosses the box and at least one link lies inside it.
bool is_consistent(const AlignmentMatrix &align, const SpanPair &phrase);

enum class SegmentStrategy { shortest, longest };

SegmentStrategy parse_strategy(std::string_view name);

/// Segmentation s_1..s_n of the source with the aligned target span of each
/// segment, or nullopt where no phrase pair covers it.
struct PhraseMapping {
    std::vector<Span> segments;
    std::vector<std::optional<Span>> targets;

    std::size_t size() const { return segments.size(); }
    std::size_t mapped_count() const;
};

/// Greedy left-to-right cover. At each uncovered position picks the phrase
/// pair starting there with the shortest (or longest) source side, then the
/// shortest target side, then the leftmost target start.
PhraseMapping build_mapping(const ParallelPair &pair, const std::vector<SpanPair> &phrases,
                            SegmentStrategy strategy = SegmentStrategy::shortest);

/// Writes "src_start TAB src_end TAB tgt_start TAB tgt_end" rows.
void write_phrase_table(std::ostream &out, const std::vector<SpanPair> &phrases);

} // namespace drtt
