#include "drtt/backends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drtt/error.hpp"
#include "drtt/wire.hpp"

namespace drtt {

using Json = nlohmann::json;

std::string_view to_string(BackendKind kind) {
    switch (kind) {
    case BackendKind::translator:
        return "translator";
    case BackendKind::mmlm:
        return "mmlm";
    case BackendKind::tmlm:
        return "tmlm";
    }
    return "?";
}

std::string_view to_string(Direction direction) {
    return direction == Direction::src2tgt ? "src2tgt" : "tgt2src";
}

BackendKind parse_backend_kind(std::string_view name) {
    if (name == "translator")
        return BackendKind::translator;
    if (name == "mmlm")
        return BackendKind::mmlm;
    if (name == "tmlm")
        return BackendKind::tmlm;
    throw InputError("unknown backend kind '" + std::string(name) + "'");
}

Direction parse_direction(std::string_view name) {
    if (name == "src2tgt")
        return Direction::src2tgt;
    if (name == "tgt2src")
        return Direction::tgt2src;
    throw InputError("unknown direction '" + std::string(name) + "'");
}

// ------------------------------------------------------------- FillRequest --

Tokens FillRequest::masked_phrase() const {
    if (mask_start >= mask_end || mask_end > tokens.size())
        return {};
    return Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(mask_start),
                  tokens.begin() + static_cast<std::ptrdiff_t>(mask_end));
}

void FillRequest::validate(BackendKind kind) const {
    if (kind == BackendKind::translator)
        throw InputError("fill request sent to a translator");
    if (k < 1)
        throw InputError("fill request needs k >= 1");
    if (mask_start >= mask_end || mask_end > tokens.size())
        throw InputError("fill request needs one non-empty masked gap inside the sentence");
    if (kind == BackendKind::tmlm && !context_src)
        throw InputError("T-MLM fill request without source context");
    if (kind == BackendKind::mmlm && context_src)
        throw InputError("M-MLM fill request must not carry source context");
}

// ---------------------------------------------------------------- Provider --

std::vector<TranslateOutcome> Provider::translate(const std::vector<Tokens> &batch, Direction) {
    return std::vector<TranslateOutcome>(
        batch.size(), TranslateOutcome::failure(describe() + " does not translate"));
}

FillOutcome Provider::fill(const FillRequest &) {
    return FillOutcome::failure(describe() + " does not fill masks");
}

// ------------------------------------------------------------------- mocks --

std::vector<TranslateOutcome> IdentityTranslator::translate(const std::vector<Tokens> &batch,
                                                            Direction) {
    std::vector<TranslateOutcome> out;
    out.reserve(batch.size());
    for (const auto &s : batch)
        out.push_back(TranslateOutcome::success(s));
    return out;
}

DictionaryTranslator::DictionaryTranslator(Table table) : table_(std::move(table)) {}

Tokens DictionaryTranslator::lookup(const Tokens &tokens) const {
    Tokens out;
    for (const auto &tok : tokens) {
        auto it = table_.find(tok);
        if (it == table_.end())
            out.push_back(tok);
        else
            out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
}

std::vector<TranslateOutcome> DictionaryTranslator::translate(const std::vector<Tokens> &batch,
                                                              Direction) {
    std::vector<TranslateOutcome> out;
    out.reserve(batch.size());
    for (const auto &s : batch)
        out.push_back(TranslateOutcome::success(lookup(s)));
    return out;
}

LossyTranslator::LossyTranslator(Table table, std::set<std::string> droplist)
    : DictionaryTranslator(std::move(table)), droplist_(std::move(droplist)) {}

std::vector<TranslateOutcome> LossyTranslator::translate(const std::vector<Tokens> &batch,
                                                         Direction) {
    std::vector<TranslateOutcome> out;
    out.reserve(batch.size());
    for (const auto &s : batch) {
        Tokens kept;
        for (auto &tok : lookup(s))
            if (!droplist_.count(tok))
                kept.push_back(std::move(tok));
        out.push_back(TranslateOutcome::success(std::move(kept)));
    }
    return out;
}

TableMlm::TableMlm(PhraseTable table) : table_(std::move(table)) {}

FillOutcome TableMlm::fill(const FillRequest &request) {
    const Tokens original = request.masked_phrase();
    std::vector<FillCandidate> out;
    auto it = table_.find(original);
    if (it != table_.end())
        for (const auto &alt : it->second) {
            if (out.size() >= request.k)
                break;
            if (alt != original)
                out.push_back({alt, -static_cast<double>(out.size())});
        }
    return FillOutcome::success(std::move(out));
}

namespace {

bool occurs_in(const Tokens &haystack, std::size_t begin, std::size_t end, const Tokens &needle) {
    if (needle.empty() || end < begin || end - begin < needle.size())
        return false;
    for (std::size_t i = begin; i + needle.size() <= end; ++i)
        if (std::equal(needle.begin(), needle.end(),
                       haystack.begin() + static_cast<std::ptrdiff_t>(i)))
            return true;
    return false;
}

} // namespace

TableTmlm::TableTmlm(PhraseTable table) : table_(std::move(table)) {
    for (const auto &[key, values] : table_)
        max_key_len_ = std::max(max_key_len_, key.size());
}

FillOutcome TableTmlm::fill(const FillRequest &request) {
    std::vector<FillCandidate> out;
    if (!request.context_src)
        return FillOutcome::failure("T-MLM request without source context");
    const Tokens &context = *request.context_src;
    const Tokens &target = request.tokens;
    auto seen = [&](const Tokens &phrase) {
        return occurs_in(target, 0, request.mask_start, phrase) ||
               occurs_in(target, request.mask_end, target.size(), phrase) ||
               std::any_of(out.begin(), out.end(),
                           [&](const FillCandidate &c) { return c.tokens == phrase; });
    };
    for (std::size_t pos = 0; pos < context.size() && out.size() < request.k; ++pos) {
        for (std::size_t len = std::min(max_key_len_, context.size() - pos); len >= 1; --len) {
            Tokens key(context.begin() + static_cast<std::ptrdiff_t>(pos),
                       context.begin() + static_cast<std::ptrdiff_t>(pos + len));
            auto it = table_.find(key);
            if (it == table_.end())
                continue;
            for (const auto &value : it->second)
                if (out.size() < request.k && !seen(value))
                    out.push_back({value, -static_cast<double>(out.size())});
        }
    }
    return FillOutcome::success(std::move(out));
}

// ------------------------------------------------------------------- cache --

std::optional<std::string> ResponseCache::lookup(const std::string &key) {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        ++misses_;
        return std::nullopt;
    }
    ++hits_;
    ++it->second.hit_count;
    return it->second.value;
}

void ResponseCache::store(const std::string &key, std::string value) {
    std::lock_guard lock(mutex_);
    auto &entry = entries_[key];
    entry.value = std::move(value);
}

std::size_t ResponseCache::hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

std::size_t ResponseCache::misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
}

std::size_t ResponseCache::hit_count(const std::string &key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.hit_count;
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// ------------------------------------------------------------------ handle --

BackendHandle::BackendHandle(BackendKind kind, std::optional<Direction> direction,
                             std::string endpoint, std::shared_ptr<Provider> provider,
                             std::chrono::milliseconds timeout)
    : kind_(kind), direction_(direction), endpoint_(std::move(endpoint)),
      provider_(std::move(provider)), timeout_(timeout),
      cache_(std::make_shared<ResponseCache>()) {
    if (!provider_)
        throw InputError("backend handle without provider");
    if (kind_ == BackendKind::translator && !direction_)
        throw InputError("translator backend '" + endpoint_ + "' needs a direction");
    if (kind_ != BackendKind::translator && direction_)
        throw InputError("fill backend '" + endpoint_ + "' must not carry a direction");
}

std::string BackendHandle::translate_cache_key(BackendKind kind, Direction direction,
                                               const Tokens &tokens) {
    return std::string(to_string(kind)) + "|" + std::string(to_string(direction)) + "|" +
           Json(tokens).dump();
}

std::vector<TranslateOutcome> BackendHandle::translate(const std::vector<Tokens> &sentences) const {
    if (kind_ != BackendKind::translator)
        throw InputError("backend '" + endpoint_ + "' is not a translator");
    std::vector<TranslateOutcome> out(sentences.size());
    std::vector<std::string> keys(sentences.size());
    std::vector<Tokens> misses;
    std::map<std::string, std::size_t> miss_index;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        keys[i] = translate_cache_key(kind_, *direction_, sentences[i]);
        if (auto hit = cache_->lookup(keys[i])) {
            out[i] = TranslateOutcome::success(Json::parse(*hit).get<Tokens>());
        } else if (miss_index.emplace(keys[i], misses.size()).second) {
            misses.push_back(sentences[i]);
        }
    }
    if (misses.empty())
        return out;

    auto fresh = provider_->translate(misses, *direction_);
    if (fresh.size() != misses.size())
        throw BackendError("backend '" + endpoint_ + "' returned " + std::to_string(fresh.size()) +
                           " translations for " + std::to_string(misses.size()) + " inputs");
    for (const auto &[key, idx] : miss_index)
        if (fresh[idx].ok())
            cache_->store(key, Json(*fresh[idx].value).dump());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        auto it = miss_index.find(keys[i]);
        if (!out[i].ok() && it != miss_index.end())
            out[i] = fresh[it->second];
    }
    return out;
}

FillOutcome BackendHandle::fill(const FillRequest &request) const {
    request.validate(kind_);
    Json payload = {{"tokens", request.tokens},
                    {"mask_start", request.mask_start},
                    {"mask_end", request.mask_end},
                    {"k", request.k}};
    if (request.context_src)
        payload["context_src"] = *request.context_src;
    const std::string key = std::string(to_string(kind_)) + "|fill|" + payload.dump();

    auto decode = [](const std::string &text) {
        std::vector<FillCandidate> out;
        for (const auto &c : Json::parse(text))
            out.push_back({c.at(0).get<Tokens>(), c.at(1).get<double>()});
        return out;
    };
    if (auto hit = cache_->lookup(key))
        return FillOutcome::success(decode(*hit));

    FillOutcome fresh = provider_->fill(request);
    if (!fresh.ok())
        return fresh;

    const Tokens original = request.masked_phrase();
    std::vector<FillCandidate> kept;
    for (auto &c : *fresh.value)
        if (std::isfinite(c.score) && !(kind_ == BackendKind::mmlm && c.tokens == original))
            kept.push_back(std::move(c));
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto &a, const auto &b) { return a.score > b.score; });
    if (kept.size() > request.k)
        kept.resize(request.k);

    Json stored = Json::array();
    for (const auto &c : kept)
        stored.push_back(Json::array({c.tokens, c.score}));
    cache_->store(key, stored.dump());
    return FillOutcome::success(std::move(kept));
}

// ------------------------------------------------------------- open_backend --

namespace {

std::vector<std::string> split_tabs(const std::string &line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t'))
        out.push_back(field);
    return out;
}

std::vector<std::string> read_table_lines(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open table " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty() && line[0] != '#')
            lines.push_back(line);
    }
    return lines;
}

} // namespace

DictionaryTranslator::Table read_dictionary_tsv(const std::string &path) {
    DictionaryTranslator::Table table;
    for (const auto &line : read_table_lines(path)) {
        auto fields = split_tabs(line);
        if (fields.empty() || fields[0].empty())
            continue;
        table[fields[0]] = fields.size() > 1 ? tokenize(fields[1]) : Tokens{};
    }
    return table;
}

PhraseTable read_phrase_table_tsv(const std::string &path) {
    PhraseTable table;
    for (const auto &line : read_table_lines(path)) {
        auto fields = split_tabs(line);
        Tokens key = fields.empty() ? Tokens{} : tokenize(fields[0]);
        if (key.empty())
            continue;
        auto &values = table[key];
        for (std::size_t i = 1; i < fields.size(); ++i)
            if (auto alt = tokenize(fields[i]); !alt.empty())
                values.push_back(std::move(alt));
    }
    return table;
}

std::shared_ptr<Provider> open_provider(BackendKind kind, const std::string &endpoint,
                                        std::chrono::milliseconds timeout) {
    auto starts_with = [&](std::string_view prefix) { return endpoint.rfind(prefix, 0) == 0; };
    auto rest = [&](std::string_view prefix) { return endpoint.substr(prefix.size()); };
    const bool translator = kind == BackendKind::translator;
    auto require = [&](bool ok) {
        if (!ok)
            throw InputError("endpoint '" + endpoint + "' does not suit a " +
                             std::string(to_string(kind)) + " backend");
    };

    std::shared_ptr<Provider> provider;
    if (endpoint == "mock:identity") {
        require(translator);
        provider = std::make_shared<IdentityTranslator>();
    } else if (starts_with("mock:dict:")) {
        require(translator);
        provider = std::make_shared<DictionaryTranslator>(read_dictionary_tsv(rest("mock:dict:")));
    } else if (starts_with("mock:lossy:")) {
        require(translator);
        const std::string spec = rest("mock:lossy:");
        const auto colon = spec.rfind(':');
        std::set<std::string> drop;
        std::string path = spec;
        if (colon != std::string::npos) {
            path = spec.substr(0, colon);
            std::istringstream list(spec.substr(colon + 1));
            for (std::string tok; std::getline(list, tok, ',');)
                if (!tok.empty())
                    drop.insert(tok);
        }
        provider = std::make_shared<LossyTranslator>(read_dictionary_tsv(path), std::move(drop));
    } else if (starts_with("mock:mlm:")) {
        require(!translator);
        provider = std::make_shared<TableMlm>(read_phrase_table_tsv(rest("mock:mlm:")));
    } else if (starts_with("mock:tmlm:")) {
        require(!translator);
        provider = std::make_shared<TableTmlm>(read_phrase_table_tsv(rest("mock:tmlm:")));
    } else if (endpoint == "mock:empty") {
        require(!translator);
        if (kind == BackendKind::tmlm)
            provider = std::make_shared<TableTmlm>(PhraseTable{});
        else
            provider = std::make_shared<TableMlm>(PhraseTable{});
    } else if (starts_with("tcp:")) {
        const std::string spec = rest("tcp:");
        const auto colon = spec.rfind(':');
        if (colon == std::string::npos)
            throw InputError("tcp endpoint needs host:port, got '" + endpoint + "'");
        int port = 0;
        try {
            port = std::stoi(spec.substr(colon + 1));
        } catch (const std::exception &) {
            port = -1;
        }
        if (port <= 0 || port > 65535)
            throw InputError("bad port in endpoint '" + endpoint + "'");
        provider = std::make_shared<wire::WireClient>(
            wire::connect_tcp(spec.substr(0, colon), static_cast<std::uint16_t>(port)), timeout,
            endpoint);
    } else if (starts_with("stdio:")) {
        provider =
            std::make_shared<wire::WireClient>(wire::spawn_stdio(rest("stdio:")), timeout, endpoint);
    } else {
        throw InputError("unrecognised backend endpoint '" + endpoint + "'");
    }
    return provider;
}

BackendHandle open_backend(BackendKind kind, std::optional<Direction> direction,
                           const std::string &endpoint, std::chrono::milliseconds timeout) {
    return BackendHandle(kind, kind == BackendKind::translator ? direction : std::nullopt,
                         endpoint, open_provider(kind, endpoint, timeout), timeout);
}

Tokens translate_one(const BackendHandle &handle, const Tokens &sentence) {
    return translate_all(handle, {sentence}).front();
}

std::vector<Tokens> translate_all(const BackendHandle &handle, const std::vector<Tokens> &batch) {
    std::vector<Tokens> out;
    out.reserve(batch.size());
    for (auto &result : handle.translate(batch)) {
        if (!result.ok())
            throw BackendError("translation failed on '" + handle.endpoint() + "': " + result.error);
        out.push_back(std::move(*result.value));
    }
    return out;
}

} // namespace drtt
