#include "drtt/corpus.hpp"

#include <fstream>
#include <optional>

#include "drtt/error.hpp"

namespace drtt {

namespace {

struct Decoded {
    char32_t code_point;
    std::size_t length;
};

std::optional<Decoded> decode_utf8(std::string_view text, std::size_t pos) {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
    const unsigned char lead = byte(pos);
    if (lead < 0x80)
        return Decoded{lead, 1};

    std::size_t length = 0;
    char32_t cp = 0;
    char32_t min_cp = 0;
    if ((lead & 0xE0) == 0xC0) {
        length = 2, cp = lead & 0x1F, min_cp = 0x80;
    } else if ((lead & 0xF0) == 0xE0) {
        length = 3, cp = lead & 0x0F, min_cp = 0x800;
    } else if ((lead & 0xF8) == 0xF0) {
        length = 4, cp = lead & 0x07, min_cp = 0x10000;
    } else {
        return std::nullopt;
    }
    if (pos + length > text.size())
        return std::nullopt;
    for (std::size_t i = 1; i < length; ++i) {
        const unsigned char cont = byte(pos + i);
        if ((cont & 0xC0) != 0x80)
            return std::nullopt;
        cp = (cp << 6) | (cont & 0x3F);
    }
    if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return std::nullopt;
    return Decoded{cp, length};
}

bool is_unicode_space(char32_t cp) {
    switch (cp) {
    case 0x0009: case 0x000A: case 0x000B: case 0x000C: case 0x000D: case 0x0020:
    case 0x0085: case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
    case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    return line;
}

std::vector<std::string> read_raw_lines(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        line = strip_cr(std::move(line));
        validate_utf8(line, lines.size() + 1);
        lines.push_back(std::move(line));
    }
    return lines;
}

} // namespace

void validate_utf8(std::string_view text, std::size_t line_number) {
    for (std::size_t pos = 0; pos < text.size();) {
        auto decoded = decode_utf8(text, pos);
        if (!decoded)
            throw InputError("invalid UTF-8 at line " + std::to_string(line_number) +
                             ", byte offset " + std::to_string(pos));
        pos += decoded->length;
    }
}

Tokens tokenize(std::string_view text, TokenizeMode mode) {
    Tokens tokens;
    std::string current;
    for (std::size_t pos = 0; pos < text.size();) {
        auto decoded = decode_utf8(text, pos);
        // Invalid bytes are kept as single-byte characters; loaders validate up front.
        const std::size_t length = decoded ? decoded->length : 1;
        const bool space = decoded && is_unicode_space(decoded->code_point);
        if (space) {
            if (!current.empty())
                tokens.push_back(std::move(current));
            current.clear();
        } else if (mode == TokenizeMode::character) {
            tokens.emplace_back(text.substr(pos, length));
        } else {
            current.append(text.substr(pos, length));
        }
        pos += length;
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

std::string detokenize(const Tokens &tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i)
            out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Corpus make_corpus(const std::vector<Tokens> &src, const std::vector<Tokens> &tgt,
                   const std::string &src_lang, const std::string &tgt_lang,
                   std::string provenance) {
    if (src.size() != tgt.size())
        throw InputError("line-count mismatch: source has " + std::to_string(src.size()) +
                         " lines, target has " + std::to_string(tgt.size()));
    if (src_lang.empty() || tgt_lang.empty() || src_lang == tgt_lang)
        throw InputError("source and target language tags must be non-empty and distinct");
    Corpus corpus;
    corpus.provenance = std::move(provenance);
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].empty() || tgt[i].empty()) {
            ++corpus.dropped;
            continue;
        }
        ParallelPair pair;
        pair.src = Sentence{src[i], src_lang};
        pair.tgt = Sentence{tgt[i], tgt_lang};
        pair.id = corpus.pairs.size();
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

Corpus load_parallel(const std::filesystem::path &src_path, const std::filesystem::path &tgt_path,
                     const std::string &src_lang, const std::string &tgt_lang, TokenizeMode mode) {
    const auto src_lines = read_raw_lines(src_path);
    const auto tgt_lines = read_raw_lines(tgt_path);
    if (src_lines.size() != tgt_lines.size())
        throw InputError("line-count mismatch: " + src_path.string() + " has " +
                         std::to_string(src_lines.size()) + " lines, " + tgt_path.string() +
                         " has " + std::to_string(tgt_lines.size()));
    std::vector<Tokens> src, tgt;
    for (const auto &line : src_lines)
        src.push_back(tokenize(line, mode));
    for (const auto &line : tgt_lines)
        tgt.push_back(tokenize(line, mode));
    return make_corpus(src, tgt, src_lang, tgt_lang,
                       src_path.string() + " | " + tgt_path.string());
}

Corpus load_tsv(const std::filesystem::path &path, const std::string &src_lang,
                const std::string &tgt_lang, TokenizeMode mode) {
    const auto lines = read_raw_lines(path);
    std::vector<Tokens> src, tgt;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto tab = lines[i].find('\t');
        if (tab == std::string::npos) {
            if (tokenize(lines[i], mode).empty()) {
                src.emplace_back();
                tgt.emplace_back();
                continue;
            }
            throw InputError(path.string() + ": line " + std::to_string(i + 1) +
                             " has no TAB separator");
        }
        src.push_back(tokenize(std::string_view(lines[i]).substr(0, tab), mode));
        tgt.push_back(tokenize(std::string_view(lines[i]).substr(tab + 1), mode));
    }
    return make_corpus(src, tgt, src_lang, tgt_lang, path.string());
}

std::vector<Tokens> read_lines(const std::filesystem::path &path, TokenizeMode mode) {
    std::vector<Tokens> out;
    for (const auto &line : read_raw_lines(path))
        out.push_back(tokenize(line, mode));
    return out;
}

void write_lines(const std::filesystem::path &path, const std::vector<Tokens> &lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path.string());
    for (const auto &line : lines)
        out << detokenize(line) << '\n';
}

} // namespace drtt
