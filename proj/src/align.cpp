#include "drtt/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "drtt/error.hpp"

namespace drtt {

// ------------------------------------------------------------ LexiconTable --

double LexiconTable::prob(std::string_view src, std::string_view tgt) const {
    auto row = rows_.find(std::string(src));
    if (row == rows_.end())
        return kUnknownFloor;
    auto cell = row->second.find(std::string(tgt));
    if (cell == row->second.end() || cell->second <= 0.0)
        return kUnknownFloor;
    return cell->second;
}

void LexiconTable::set(const std::string &src, const std::string &tgt, double p) {
    if (!(p >= 0.0) || !std::isfinite(p))
        throw InputError("lexicon probability must be finite and non-negative");
    rows_[src][tgt] = p;
    src_vocab_.insert(src);
    tgt_vocab_.insert(tgt);
}

std::size_t LexiconTable::size() const {
    std::size_t n = 0;
    for (const auto &[src, row] : rows_)
        n += row.size();
    return n;
}

double LexiconTable::max_row_deviation() const {
    double worst = 0.0;
    for (const auto &[src, row] : rows_) {
        double sum = 0.0;
        for (const auto &[tgt, p] : row)
            sum += p;
        worst = std::max(worst, std::abs(1.0 - sum));
    }
    return worst;
}

std::vector<std::tuple<std::string, std::string, double>> LexiconTable::entries() const {
    std::vector<std::tuple<std::string, std::string, double>> out;
    out.reserve(size());
    for (const auto &[src, row] : rows_)
        for (const auto &[tgt, p] : row)
            out.emplace_back(src, tgt, p);
    std::sort(out.begin(), out.end());
    return out;
}

void LexiconTable::write_tsv(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path.string());
    out.precision(17);
    for (const auto &[src, tgt, p] : entries())
        out << src << '\t' << tgt << '\t' << p << '\n';
}

LexiconTable LexiconTable::read_tsv(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path.string());
    LexiconTable table;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (b == std::string::npos)
            throw InputError(path.string() + ": line " + std::to_string(number) +
                             " is not src TAB tgt TAB prob");
        double p = 0.0;
        try {
            p = std::stod(line.substr(b + 1));
        } catch (const std::exception &) {
            throw InputError(path.string() + ": bad probability on line " +
                             std::to_string(number));
        }
        table.set(line.substr(0, a), line.substr(a + 1, b - a - 1), p);
    }
    return table;
}

// ---------------------------------------------------------------- training --

namespace {

/// Interned corpus: source id 0 is the null token.
struct Interned {
    std::vector<std::string> src_words{std::string(kNullToken)};
    std::vector<std::string> tgt_words;
    std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> pairs;
};

Interned intern(const Corpus &corpus) {
    Interned out;
    std::unordered_map<std::string, std::uint32_t> src_ids{{std::string(kNullToken), 0}};
    std::unordered_map<std::string, std::uint32_t> tgt_ids;
    auto id_of = [](auto &ids, auto &words, const std::string &w) {
        auto [it, inserted] = ids.try_emplace(w, static_cast<std::uint32_t>(words.size()));
        if (inserted)
            words.push_back(w);
        return it->second;
    };
    for (const auto &pair : corpus.pairs) {
        std::vector<std::uint32_t> s, t;
        for (const auto &w : pair.src.tokens)
            s.push_back(id_of(src_ids, out.src_words, w));
        for (const auto &w : pair.tgt.tokens)
            t.push_back(id_of(tgt_ids, out.tgt_words, w));
        out.pairs.emplace_back(std::move(s), std::move(t));
    }
    return out;
}

std::uint64_t cell_key(std::uint32_t s, std::uint32_t t) {
    return (static_cast<std::uint64_t>(s) << 32) | t;
}

/// Prior over source positions for target position j; sums to 1 - p_null.
void alignment_prior(std::size_t m, std::size_t n, std::size_t j, const AlignConfig &config,
                     std::vector<double> &prior) {
    prior.assign(m, 0.0);
    double z = 0.0;
    const double tgt_pos = static_cast<double>(j + 1) / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
        const double src_pos = static_cast<double>(i + 1) / static_cast<double>(m);
        prior[i] = std::exp(-config.diagonal_tension * std::abs(src_pos - tgt_pos));
        z += prior[i];
    }
    for (auto &p : prior)
        p *= (1.0 - config.p_null) / z;
}

void validate(const AlignConfig &config) {
    if (config.iterations < 1)
        throw InputError("alignment iterations must be >= 1");
    if (!(config.diagonal_tension >= 0.0))
        throw InputError("diagonal tension must be >= 0");
    if (!(config.p_null >= 0.0 && config.p_null < 1.0))
        throw InputError("p_null must lie in [0, 1)");
}

} // namespace

Ibm1Model train_ibm1(const Corpus &corpus, const AlignConfig &config) {
    if (corpus.empty())
        throw InputError("train_ibm1: empty corpus");
    validate(config);

    const Interned data = intern(corpus);
    const bool use_null = config.p_null > 0.0;
    const double uniform = 1.0 / static_cast<double>(data.tgt_words.size());

    std::unordered_map<std::uint64_t, double> t;
    for (const auto &[src, tgt] : data.pairs)
        for (auto f : tgt) {
            if (use_null)
                t.emplace(cell_key(0, f), uniform);
            for (auto e : src)
                t.emplace(cell_key(e, f), uniform);
        }

    std::vector<double> prior, post;
    std::unordered_map<std::uint64_t, double> counts;
    Ibm1Model model;

    auto e_step = [&](bool accumulate) {
        double ll = 0.0;
        counts.clear();
        for (const auto &[src, tgt] : data.pairs) {
            const std::size_t m = src.size(), n = tgt.size();
            for (std::size_t j = 0; j < n; ++j) {
                alignment_prior(m, n, j, config, prior);
                post.assign(m, 0.0);
                double z = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    post[i] = prior[i] * t.at(cell_key(src[i], tgt[j]));
                    z += post[i];
                }
                double null_post = use_null ? config.p_null * t.at(cell_key(0, tgt[j])) : 0.0;
                z += null_post;
                ll += std::log(z);
                if (!accumulate)
                    continue;
                for (std::size_t i = 0; i < m; ++i)
                    counts[cell_key(src[i], tgt[j])] += post[i] / z;
                if (use_null)
                    counts[cell_key(0, tgt[j])] += null_post / z;
            }
        }
        return ll;
    };

    for (int iter = 0; iter < config.iterations; ++iter) {
        model.log_likelihood.push_back(e_step(true));
        std::unordered_map<std::uint32_t, double> totals;
        for (const auto &[key, c] : counts)
            totals[static_cast<std::uint32_t>(key >> 32)] += c;
        for (auto &[key, p] : t) {
            auto c = counts.find(key);
            const double total = totals[static_cast<std::uint32_t>(key >> 32)];
            p = (c == counts.end() || total <= 0.0) ? 0.0 : c->second / total;
        }
    }
    model.log_likelihood.push_back(e_step(false));

    for (const auto &[key, p] : t) {
        if (p <= 0.0)
            continue;
        const auto s = static_cast<std::uint32_t>(key >> 32);
        const auto f = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
        model.lexicon.set(data.src_words[s], data.tgt_words[f], p);
    }
    return model;
}

double corpus_log_likelihood(const Corpus &corpus, const LexiconTable &lex,
                             const AlignConfig &config) {
    validate(config);
    std::vector<double> prior;
    double ll = 0.0;
    for (const auto &pair : corpus.pairs) {
        const auto &src = pair.src.tokens;
        const auto &tgt = pair.tgt.tokens;
        for (std::size_t j = 0; j < tgt.size(); ++j) {
            alignment_prior(src.size(), tgt.size(), j, config, prior);
            double z = config.p_null > 0.0 ? config.p_null * lex.prob(kNullToken, tgt[j]) : 0.0;
            for (std::size_t i = 0; i < src.size(); ++i)
                z += prior[i] * lex.prob(src[i], tgt[j]);
            ll += std::log(z);
        }
    }
    return ll;
}

// --------------------------------------------------------- AlignmentMatrix --

AlignmentMatrix::AlignmentMatrix(std::size_t src_len, std::size_t tgt_len)
    : src_len_(src_len), tgt_len_(tgt_len) {}

void AlignmentMatrix::add(std::size_t i, std::size_t j) {
    if (i >= src_len_ || j >= tgt_len_)
        throw InputError("alignment link " + std::to_string(i) + "-" + std::to_string(j) +
                         " outside " + std::to_string(src_len_) + "x" + std::to_string(tgt_len_));
    links_.emplace(i, j);
}

AlignmentMatrix AlignmentMatrix::transposed() const {
    AlignmentMatrix out(tgt_len_, src_len_);
    for (const auto &[i, j] : links_)
        out.add(j, i);
    return out;
}

AlignmentMatrix viterbi_align(const ParallelPair &pair, const LexiconTable &lex,
                              const AlignConfig &config) {
    const auto &src = pair.src.tokens;
    const auto &tgt = pair.tgt.tokens;
    AlignmentMatrix out(src.size(), tgt.size());
    if (src.empty())
        return out;
    std::vector<double> prior;
    for (std::size_t j = 0; j < tgt.size(); ++j) {
        alignment_prior(src.size(), tgt.size(), j, config, prior);
        std::size_t best_i = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < src.size(); ++i) {
            const double score = prior[i] * lex.prob(src[i], tgt[j]);
            if (score > best) {
                best = score;
                best_i = i;
            }
        }
        const double null_score =
            config.p_null > 0.0 ? config.p_null * lex.prob(kNullToken, tgt[j]) : 0.0;
        if (null_score > best)
            continue;
        out.add(best_i, j);
    }
    return out;
}

// -------------------------------------------------------------- symmetrize --

SymmetrizeHeuristic parse_heuristic(std::string_view name) {
    if (name == "intersection")
        return SymmetrizeHeuristic::intersection;
    if (name == "union")
        return SymmetrizeHeuristic::union_;
    if (name == "grow_diag_final_and" || name == "grow-diag-final-and")
        return SymmetrizeHeuristic::grow_diag_final_and;
    throw InputError("unknown symmetrization heuristic '" + std::string(name) + "'");
}

AlignmentMatrix symmetrize(const AlignmentMatrix &fwd, const AlignmentMatrix &rev,
                           SymmetrizeHeuristic heuristic) {
    if (rev.src_len() != fwd.tgt_len() || rev.tgt_len() != fwd.src_len())
        throw InputError("symmetrize: reverse alignment is " + std::to_string(rev.src_len()) +
                         "x" + std::to_string(rev.tgt_len()) + ", expected " +
                         std::to_string(fwd.tgt_len()) + "x" + std::to_string(fwd.src_len()));
    const AlignmentMatrix back = rev.transposed();
    const std::size_t m = fwd.src_len(), n = fwd.tgt_len();

    AlignmentMatrix inter(m, n), uni(m, n);
    for (const auto &[i, j] : fwd.links()) {
        uni.add(i, j);
        if (back.contains(i, j))
            inter.add(i, j);
    }
    for (const auto &[i, j] : back.links())
        uni.add(i, j);

    if (heuristic == SymmetrizeHeuristic::intersection)
        return inter;
    if (heuristic == SymmetrizeHeuristic::union_)
        return uni;

    AlignmentMatrix out = inter;
    std::vector<bool> src_aligned(m, false), tgt_aligned(n, false);
    for (const auto &[i, j] : out.links())
        src_aligned[i] = tgt_aligned[j] = true;
    auto link = [&](std::size_t i, std::size_t j) {
        out.add(i, j);
        src_aligned[i] = tgt_aligned[j] = true;
    };

    static constexpr int kNeighbors[8][2] = {{-1, 0}, {0, -1}, {1, 0},  {0, 1},
                                             {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    for (bool grew = true; grew;) {
        grew = false;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (!out.contains(i, j))
                    continue;
                for (const auto &d : kNeighbors) {
                    const auto ni = static_cast<long>(i) + d[0];
                    const auto nj = static_cast<long>(j) + d[1];
                    if (ni < 0 || nj < 0 || ni >= static_cast<long>(m) ||
                        nj >= static_cast<long>(n))
                        continue;
                    const auto ui = static_cast<std::size_t>(ni);
                    const auto uj = static_cast<std::size_t>(nj);
                    if ((!src_aligned[ui] || !tgt_aligned[uj]) && uni.contains(ui, uj) &&
                        !out.contains(ui, uj)) {
                        link(ui, uj);
                        grew = true;
                    }
                }
            }
    }

    for (const auto *direction : {&fwd, &back})
        for (const auto &[i, j] : direction->links())
            if (!src_aligned[i] && !tgt_aligned[j])
                link(i, j);
    return out;
}

// ----------------------------------------------------------------- pharaoh --

std::string write_pharaoh(const AlignmentMatrix &align) {
    std::string out;
    for (const auto &[i, j] : align.links()) {
        if (!out.empty())
            out.push_back(' ');
        out += std::to_string(i) + "-" + std::to_string(j);
    }
    return out;
}

AlignmentMatrix read_pharaoh(std::string_view line, std::size_t src_len, std::size_t tgt_len) {
    AlignmentMatrix out(src_len, tgt_len);
    std::istringstream in{std::string(line)};
    std::string item;
    while (in >> item) {
        const auto dash = item.find('-');
        std::size_t i = 0, j = 0;
        try {
            if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
                throw std::invalid_argument("no dash");
            std::size_t used_i = 0, used_j = 0;
            i = std::stoul(item.substr(0, dash), &used_i);
            j = std::stoul(item.substr(dash + 1), &used_j);
            if (used_i != dash || used_j != item.size() - dash - 1 || item[0] == '-' ||
                item[dash + 1] == '-')
                throw std::invalid_argument("trailing characters");
        } catch (const std::exception &) {
            throw InputError("malformed Pharaoh item '" + item + "'");
        }
        out.add(i, j);
    }
    return out;
}

// ----------------------------------------------------------------- helpers --

Corpus reversed(const Corpus &corpus) {
    Corpus out = corpus;
    for (auto &pair : out.pairs)
        std::swap(pair.src, pair.tgt);
    return out;
}

AlignmentMatrix BidirectionalAligner::align(const ParallelPair &pair) const {
    const AlignmentMatrix forward = viterbi_align(pair, fwd, config);
    if (!symmetrized)
        return forward;
    ParallelPair swapped = pair;
    std::swap(swapped.src, swapped.tgt);
    return symmetrize(forward, viterbi_align(swapped, rev, config), heuristic);
}

BidirectionalAligner train_aligner(const Corpus &corpus, const AlignConfig &config,
                                   SymmetrizeHeuristic heuristic) {
    BidirectionalAligner aligner;
    aligner.fwd = train_ibm1(corpus, config).lexicon;
    aligner.rev = train_ibm1(reversed(corpus), config).lexicon;
    aligner.config = config;
    aligner.heuristic = heuristic;
    return aligner;
}

} // namespace drtt
