#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace drtt {

using Tokens = std::vector<std::string>;

enum class TokenizeMode { whitespace, character };

struct Sentence {
    Tokens tokens;
    std::string lang;

    bool operator==(const Sentence &) const = default;
};

struct ParallelPair {
    Sentence src;
    Sentence tgt;
    std::size_t id = 0;

    bool operator==(const ParallelPair &) const = default;
};

/// An immutable, ordered collection of sentence pairs. Pair ids are 0..size-1.
struct Corpus {
    std::vector<ParallelPair> pairs;
    std::string provenance;
    /// Input lines skipped because one side tokenized to nothing.
    std::size_t dropped = 0;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
    bool operator==(const Corpus &) const = default;
};

Tokens tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::whitespace);
std::string detokenize(const Tokens &tokens);

/// Reads two line-aligned UTF-8 files (LF or CRLF). Line i of each file
/// becomes pair i before empty pairs are dropped; survivors are renumbered.
Corpus load_parallel(const std::filesystem::path &src_path, const std::filesystem::path &tgt_path,
                     const std::string &src_lang, const std::string &tgt_lang,
                     TokenizeMode mode = TokenizeMode::whitespace);

/// Same as load_parallel for the "source TAB target" single-file layout.
Corpus load_tsv(const std::filesystem::path &path, const std::string &src_lang,
                const std::string &tgt_lang, TokenizeMode mode = TokenizeMode::whitespace);

/// Builds a corpus from in-memory sentences, applying the same drop rule.
Corpus make_corpus(const std::vector<Tokens> &src, const std::vector<Tokens> &tgt,
                   const std::string &src_lang, const std::string &tgt_lang,
                   std::string provenance = "memory");

/// Reads every line of a UTF-8 file, tokenized. Empty lines are kept as empty
/// token lists (hypothesis files must stay line-aligned with references).
std::vector<Tokens> read_lines(const std::filesystem::path &path,
                               TokenizeMode mode = TokenizeMode::whitespace);

void write_lines(const std::filesystem::path &path, const std::vector<Tokens> &lines);

/// Throws InputError with the 1-based line number if `text` is not valid UTF-8.
void validate_utf8(std::string_view text, std::size_t line_number);

} // namespace drtt
