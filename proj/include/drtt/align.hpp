#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drtt/corpus.hpp"

namespace drtt {

/// Source-side token standing for "aligned to nothing".
inline constexpr std::string_view kNullToken = "<null>";

/// Probability returned for (src, tgt) pairs the table has never seen.
inline constexpr double kUnknownFloor = 1e-12;

struct AlignConfig {
    int iterations = 5;
    double diagonal_tension = 4.0;
    double p_null = 0.08;
};

/// Lexical translation table t(tgt | src).
class LexiconTable {
  public:
    double prob(std::string_view src, std::string_view tgt) const;
    void set(const std::string &src, const std::string &tgt, double p);

    const std::set<std::string> &src_vocab() const { return src_vocab_; }
    const std::set<std::string> &tgt_vocab() const { return tgt_vocab_; }
    std::size_t size() const;

    /// Largest |1 - sum_tgt t(tgt|src)| over all source rows.
    double max_row_deviation() const;

    /// Rows as (src, tgt, prob), sorted by src then tgt.
    std::vector<std::tuple<std::string, std::string, double>> entries() const;

    void write_tsv(const std::filesystem::path &path) const;
    static LexiconTable read_tsv(const std::filesystem::path &path);

  private:
    std::unordered_map<std::string, std::unordered_map<std::string, double>> rows_;
    std::set<std::string> src_vocab_;
    std::set<std::string> tgt_vocab_;
};

struct Ibm1Model {
    LexiconTable lexicon;
    /// Corpus log-likelihood before training (index 0) and after each iteration.
    std::vector<double> log_likelihood;
};

/// EM training of a lexical model with a diagonal-favoring alignment prior:
/// for target position j of n and source position i of m, the prior weight is
/// exp(-tension * |(i+1)/m - (j+1)/n|), renormalized to 1 - p_null, with the
/// remaining p_null mass on the null token. Tension 0 and p_null 0 is IBM Model 1.
Ibm1Model train_ibm1(const Corpus &corpus, const AlignConfig &config);

/// Log-likelihood of the corpus targets given sources under `lex`.
double corpus_log_likelihood(const Corpus &corpus, const LexiconTable &lex,
                             const AlignConfig &config);

/// Word alignment links; i indexes source tokens, j target tokens.
class AlignmentMatrix {
  public:
    using Link = std::pair<std::size_t, std::size_t>;

    AlignmentMatrix() = default;
    AlignmentMatrix(std::size_t src_len, std::size_t tgt_len);

    void add(std::size_t i, std::size_t j);
    bool contains(std::size_t i, std::size_t j) const { return links_.count({i, j}) != 0; }
    const std::set<Link> &links() const { return links_; }
    std::size_t src_len() const { return src_len_; }
    std::size_t tgt_len() const { return tgt_len_; }
    bool empty() const { return links_.empty(); }

    AlignmentMatrix transposed() const;
    bool operator==(const AlignmentMatrix &) const = default;

  private:
    std::set<Link> links_;
    std::size_t src_len_ = 0;
    std::size_t tgt_len_ = 0;
};

/// Each target token links to the most probable source position, or to
/// nothing when the null token wins outright. Ties go to the smaller index.
AlignmentMatrix viterbi_align(const ParallelPair &pair, const LexiconTable &lex,
                              const AlignConfig &config);

enum class SymmetrizeHeuristic { intersection, union_, grow_diag_final_and };

/// `rev` aligns the same pair with roles swapped (src_len == fwd.tgt_len).
AlignmentMatrix symmetrize(const AlignmentMatrix &fwd, const AlignmentMatrix &rev,
                           SymmetrizeHeuristic heuristic);

SymmetrizeHeuristic parse_heuristic(std::string_view name);

std::string write_pharaoh(const AlignmentMatrix &align);
AlignmentMatrix read_pharaoh(std::string_view line, std::size_t src_len, std::size_t tgt_len);

/// Corpus with source and target swapped, for training the reverse model.
Corpus reversed(const Corpus &corpus);

/// Trained models in both directions, ready to align pairs.
struct BidirectionalAligner {
    LexiconTable fwd;
    LexiconTable rev;
    AlignConfig config;
    SymmetrizeHeuristic heuristic = SymmetrizeHeuristic::grow_diag_final_and;
    /// When false only the forward Viterbi alignment is used.
    bool symmetrized = true;

    AlignmentMatrix align(const ParallelPair &pair) const;
};

BidirectionalAligner train_aligner(const Corpus &corpus, const AlignConfig &config,
                                   SymmetrizeHeuristic heuristic =
                                       SymmetrizeHeuristic::grow_diag_final_and);

} // namespace drtt
