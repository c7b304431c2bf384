#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "drtt/align.hpp"
#include "drtt/backends.hpp"
#include "drtt/corpus.hpp"

namespace drtt {

enum class NoiseKind { deletion, swap, insertion, rep_src, rep_both };

inline constexpr NoiseKind kAllNoiseKinds[] = {NoiseKind::deletion, NoiseKind::swap,
                                               NoiseKind::insertion, NoiseKind::rep_src,
                                               NoiseKind::rep_both};

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::deletion;
    double ratio = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Number of positions to perturb: 0 at ratio 0, else max(1, floor(len * ratio)).
std::size_t perturbed_count(std::size_t length, double ratio);

/// Word vectors for nearest-neighbour replacement.
class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim);

    void add(const std::string &token, std::vector<double> vector);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return tokens_.size(); }
    bool contains(std::string_view token) const;
    const std::vector<double> &vector(std::string_view token) const;

    /// Most cosine-similar other token, scanning every entry (first one wins
    /// ties). nullopt for OOV or zero-norm tokens or a table with one entry.
    std::optional<std::string> nearest(std::string_view token) const;

    /// Lines dropped by `load_embeddings` for inconsistent dimensionality.
    std::size_t dropped = 0;

  private:
    std::size_t dim_ = 0;
    std::vector<std::string> tokens_;
    std::vector<std::vector<double>> vectors_;
    std::vector<double> norms_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Text word-vector format: optional "count dim" header, then "token v1 .. vd".
EmbeddingTable load_embeddings(const std::filesystem::path &path);
EmbeddingTable parse_embeddings(std::istream &in);

/// Everything a noise kind might need. Unused members may stay empty.
struct NoiseResources {
    const EmbeddingTable *embeddings = nullptr;
    const BackendHandle *mmlm = nullptr;
    const BackendHandle *tmlm = nullptr;
    std::function<AlignmentMatrix(const ParallelPair &)> aligner;
};

struct PerturbResult {
    Tokens src;
    /// Perturbed target; only rep_both changes it.
    Tokens tgt;
    /// Perturbed positions in the original source, ascending.
    std::vector<std::size_t> positions;
    /// Non-zero when fewer positions than requested could be perturbed.
    std::size_t warnings = 0;
};

/// Perturbs one pair. The random stream is derived from (spec.seed, pair.id),
/// so results do not depend on processing order.
PerturbResult perturb(const ParallelPair &pair, const NoiseSpec &spec,
                      const NoiseResources &resources);

struct NoiseManifestEntry {
    std::size_t id = 0;
    NoiseKind kind = NoiseKind::deletion;
    std::vector<std::size_t> positions;
};

struct PerturbedCorpus {
    Corpus corpus;
    std::vector<NoiseManifestEntry> manifest;
    std::size_t warnings = 0;
};

/// Perturbs every pair. Pairs keep their ids even when a side becomes empty.
PerturbedCorpus perturb_corpus(const Corpus &corpus, const NoiseSpec &spec,
                               const NoiseResources &resources);

void write_noise_manifest(std::ostream &out, const std::vector<NoiseManifestEntry> &manifest);

} // namespace drtt
