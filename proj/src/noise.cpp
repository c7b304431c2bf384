#include "drtt/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "drtt/error.hpp"
#include "drtt/phrases.hpp"

namespace drtt {

std::string_view to_string(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::deletion:
        return "deletion";
    case NoiseKind::swap:
        return "swap";
    case NoiseKind::insertion:
        return "insertion";
    case NoiseKind::rep_src:
        return "rep_src";
    case NoiseKind::rep_both:
        return "rep_both";
    }
    return "?";
}

NoiseKind parse_noise_kind(std::string_view name) {
    for (auto kind : kAllNoiseKinds)
        if (to_string(kind) == name)
            return kind;
    throw InputError("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw InputError("noise ratio must lie in [0, 1]");
}

std::size_t perturbed_count(std::size_t length, double ratio) {
    if (ratio <= 0.0 || length == 0)
        return 0;
    // 1e-9 absorbs products like 10 * 0.3 = 3.0000000000000004 and 0.7 * 10 = 6.999...
    const auto floored = static_cast<std::size_t>(std::floor(static_cast<double>(length) * ratio + 1e-9));
    return std::min(length, std::max<std::size_t>(1, floored));
}

// ---------------------------------------------------------- EmbeddingTable --

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {}

void EmbeddingTable::add(const std::string &token, std::vector<double> vector) {
    if (dim_ == 0)
        dim_ = vector.size();
    if (vector.size() != dim_ || dim_ == 0)
        throw InputError("embedding for '" + token + "' has dimension " +
                         std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
    double norm = 0.0;
    for (double v : vector)
        norm += v * v;
    auto [it, inserted] = index_.try_emplace(token, tokens_.size());
    if (!inserted) {
        vectors_[it->second] = std::move(vector);
        norms_[it->second] = std::sqrt(norm);
        return;
    }
    tokens_.push_back(token);
    vectors_.push_back(std::move(vector));
    norms_.push_back(std::sqrt(norm));
}

bool EmbeddingTable::contains(std::string_view token) const {
    return index_.count(std::string(token)) != 0;
}

const std::vector<double> &EmbeddingTable::vector(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end())
        throw InputError("no embedding for '" + std::string(token) + "'");
    return vectors_[it->second];
}

std::optional<std::string> EmbeddingTable::nearest(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end() || norms_[it->second] == 0.0)
        return std::nullopt;
    const std::size_t self = it->second;
    const auto &query = vectors_[self];
    std::optional<std::size_t> best;
    double best_cos = 0.0;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (i == self || norms_[i] == 0.0)
            continue;
        double dot = 0.0;
        for (std::size_t d = 0; d < dim_; ++d)
            dot += query[d] * vectors_[i][d];
        const double cos = dot / (norms_[self] * norms_[i]);
        if (!best || cos > best_cos) {
            best = i;
            best_cos = cos;
        }
    }
    if (!best)
        return std::nullopt;
    return tokens_[*best];
}

EmbeddingTable parse_embeddings(std::istream &in) {
    EmbeddingTable table;
    std::size_t dropped = 0;
    std::size_t header_dim = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) {
            first = false;
            continue;
        }
        std::vector<double> values;
        bool numeric = true;
        for (std::string field; fields >> field;) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(field, &used));
                numeric = numeric && used == field.size();
            } catch (const std::exception &) {
                numeric = false;
            }
        }
        if (first) {
            first = false;
            // "count dim" header line
            if (values.size() == 1 && numeric &&
                token.find_first_not_of("0123456789") == std::string::npos &&
                values[0] >= 1 && values[0] == std::floor(values[0])) {
                header_dim = static_cast<std::size_t>(values[0]);
                table = EmbeddingTable(header_dim);
                continue;
            }
        }
        const std::size_t expected = table.dim() ? table.dim() : values.size();
        if (!numeric || values.empty() || values.size() != expected) {
            ++dropped;
            continue;
        }
        table.add(token, std::move(values));
    }
    if (table.size() == 0)
        throw InputError("embedding file has no valid vectors");
    table.dropped = dropped;
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open embeddings " + path.string());
    return parse_embeddings(in);
}

// ----------------------------------------------------------------- perturb --

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 sentence_stream(std::uint64_t seed, std::size_t id) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(id))));
}

Tokens splice(const Tokens &tokens, std::size_t start, std::size_t end, const Tokens &replacement) {
    Tokens out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(start));
    out.insert(out.end(), replacement.begin(), replacement.end());
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(end), tokens.end());
    return out;
}

std::optional<Tokens> mlm_replacement(const BackendHandle &mmlm, const Tokens &src,
                                      std::size_t pos) {
    FillRequest request;
    request.tokens = src;
    request.mask_start = pos;
    request.mask_end = pos + 1;
    request.k = 1;
    auto filled = mmlm.fill(request);
    if (!filled.ok())
        throw BackendError("M-MLM failed: " + filled.error);
    for (const auto &c : *filled.value)
        if (!c.tokens.empty() && c.tokens != Tokens{src[pos]})
            return c.tokens;
    return std::nullopt;
}

} // namespace

PerturbResult perturb(const ParallelPair &pair, const NoiseSpec &spec,
                      const NoiseResources &resources) {
    spec.validate();
    const Tokens &src = pair.src.tokens;
    PerturbResult result{src, pair.tgt.tokens, {}, 0};
    const std::size_t want = perturbed_count(src.size(), spec.ratio);
    if (want == 0)
        return result;

    if (spec.kind == NoiseKind::rep_src && !resources.embeddings)
        throw InputError("rep_src noise needs an embedding table");
    if (spec.kind == NoiseKind::rep_both &&
        (!resources.mmlm || !resources.tmlm || !resources.aligner))
        throw InputError("rep_both noise needs M-MLM and T-MLM backends and an aligner");

    // Swapping exchanges a token with its right neighbour, so the last index
    // is only eligible in a one-token sentence (where the swap is a no-op).
    std::vector<std::size_t> order(src.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    if (spec.kind == NoiseKind::swap && src.size() > 1)
        order.pop_back();
    auto rng = sentence_stream(spec.seed, pair.id);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);

    std::vector<std::size_t> chosen;
    std::unordered_map<std::size_t, Tokens> replacement;
    for (std::size_t pos : order) {
        if (chosen.size() == want)
            break;
        if (spec.kind == NoiseKind::rep_src) {
            auto neighbour = resources.embeddings->nearest(src[pos]);
            if (!neighbour)
                continue;
            replacement[pos] = Tokens{*neighbour};
        } else if (spec.kind == NoiseKind::rep_both) {
            auto phrase = mlm_replacement(*resources.mmlm, src, pos);
            if (!phrase)
                continue;
            replacement[pos] = std::move(*phrase);
        }
        chosen.push_back(pos);
    }
    std::sort(chosen.begin(), chosen.end());
    result.positions = chosen;
    result.warnings = chosen.size() < want ? 1 : 0;

    Tokens &out = result.src;
    switch (spec.kind) {
    case NoiseKind::deletion:
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it)
            out.erase(out.begin() + static_cast<std::ptrdiff_t>(*it));
        break;
    case NoiseKind::swap:
        for (auto pos : chosen)
            if (pos + 1 < out.size())
                std::swap(out[pos], out[pos + 1]);
        break;
    case NoiseKind::insertion:
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
            const std::string copy = out[*it];
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(*it), copy);
        }
        break;
    case NoiseKind::rep_src:
    case NoiseKind::rep_both:
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it)
            out = splice(out, *it, *it + 1, replacement[*it]);
        break;
    }

    if (spec.kind == NoiseKind::rep_both) {
        const AlignmentMatrix alignment = resources.aligner(pair);
        const Tokens &tgt = pair.tgt.tokens;
        std::vector<std::pair<Span, Tokens>> edits;
        for (auto pos : chosen) {
            std::optional<Span> span;
            for (const auto &[i, j] : alignment.links())
                if (i == pos)
                    span = span ? Span{std::min(span->start, j), std::max(span->end, j + 1)}
                                : Span{j, j + 1};
            if (!span || span->end > tgt.size())
                continue;
            const bool overlaps = std::any_of(edits.begin(), edits.end(), [&](const auto &e) {
                return e.first.start < span->end && span->start < e.first.end;
            });
            if (overlaps)
                continue;
            FillRequest request;
            request.context_src = out;
            request.tokens = tgt;
            request.mask_start = span->start;
            request.mask_end = span->end;
            request.k = 1;
            auto filled = resources.tmlm->fill(request);
            if (!filled.ok())
                throw BackendError("T-MLM failed: " + filled.error);
            if (!filled.value->empty() && !filled.value->front().tokens.empty())
                edits.emplace_back(*span, filled.value->front().tokens);
        }
        std::sort(edits.begin(), edits.end(),
                  [](const auto &a, const auto &b) { return a.first.start > b.first.start; });
        for (const auto &[span, phrase] : edits)
            result.tgt = splice(result.tgt, span.start, span.end, phrase);
    }
    return result;
}

PerturbedCorpus perturb_corpus(const Corpus &corpus, const NoiseSpec &spec,
                               const NoiseResources &resources) {
    PerturbedCorpus out;
    out.corpus.provenance = corpus.provenance + " + " + std::string(to_string(spec.kind)) + "@" +
                            std::to_string(spec.ratio);
    for (const auto &pair : corpus.pairs) {
        auto result = perturb(pair, spec, resources);
        ParallelPair perturbed = pair;
        perturbed.src.tokens = std::move(result.src);
        perturbed.tgt.tokens = std::move(result.tgt);
        out.corpus.pairs.push_back(std::move(perturbed));
        out.manifest.push_back({pair.id, spec.kind, std::move(result.positions)});
        out.warnings += result.warnings;
    }
    return out;
}

void write_noise_manifest(std::ostream &out, const std::vector<NoiseManifestEntry> &manifest) {
    for (const auto &entry : manifest) {
        nlohmann::ordered_json j = {
            {"id", entry.id}, {"kind", to_string(entry.kind)}, {"positions", entry.positions}};
        out << j.dump() << '\n';
    }
}

} // namespace drtt
