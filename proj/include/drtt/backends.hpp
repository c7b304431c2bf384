#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "drtt/corpus.hpp"

namespace drtt {

enum class BackendKind { translator, mmlm, tmlm };
enum class Direction { src2tgt, tgt2src };

std::string_view to_string(BackendKind kind);
std::string_view to_string(Direction direction);
BackendKind parse_backend_kind(std::string_view name);
Direction parse_direction(std::string_view name);

/// Either a value or an error message; used for per-request backend failures.
template <class T> struct Outcome {
    std::optional<T> value;
    std::string error;

    static Outcome success(T v) { return Outcome{std::move(v), {}}; }
    static Outcome failure(std::string message) { return Outcome{std::nullopt, std::move(message)}; }
    bool ok() const { return value.has_value(); }
};

/// A fill-mask query. `tokens` holds the full sentence; [mask_start, mask_end)
/// is the single masked gap. T-MLM requests also carry the source context.
struct FillRequest {
    std::optional<Tokens> context_src;
    Tokens tokens;
    std::size_t mask_start = 0;
    std::size_t mask_end = 0;
    std::size_t k = 1;

    Tokens masked_phrase() const;
    /// Throws InputError when the request does not suit a `kind` provider.
    void validate(BackendKind kind) const;
};

struct FillCandidate {
    Tokens tokens;
    double score = 0.0;

    bool operator==(const FillCandidate &) const = default;
};

using TranslateOutcome = Outcome<Tokens>;
using FillOutcome = Outcome<std::vector<FillCandidate>>;

/// Anything that can answer translate and/or fill requests.
class Provider {
  public:
    virtual ~Provider() = default;

    virtual std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                                    Direction direction);
    virtual FillOutcome fill(const FillRequest &request);
    virtual std::string describe() const = 0;
};

// ------------------------------------------------------------------- mocks --

/// Output = input.
class IdentityTranslator : public Provider {
  public:
    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                            Direction direction) override;
    std::string describe() const override { return "mock:identity"; }
};

/// Per-token lookup; tokens missing from the table are copied through.
/// A table value may be several tokens or none.
class DictionaryTranslator : public Provider {
  public:
    using Table = std::unordered_map<std::string, Tokens>;

    explicit DictionaryTranslator(Table table);
    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                            Direction direction) override;
    std::string describe() const override { return "mock:dict"; }

    Tokens lookup(const Tokens &tokens) const;

  private:
    Table table_;
};

/// Dictionary lookup, then deletion of every output token in the drop list.
/// Models a weak backward model that loses words on the way back.
class LossyTranslator : public DictionaryTranslator {
  public:
    LossyTranslator(Table table, std::set<std::string> droplist);
    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &batch,
                                            Direction direction) override;
    std::string describe() const override { return "mock:lossy"; }

  private:
    std::set<std::string> droplist_;
};

/// Phrase -> ordered alternatives. Shared by both table-driven fill mocks.
using PhraseTable = std::map<Tokens, std::vector<Tokens>>;

/// M-MLM mock: returns the listed alternatives of the masked phrase, minus
/// the original phrase itself, scored 0, -1, -2, ...
class TableMlm : public Provider {
  public:
    explicit TableMlm(PhraseTable table);
    FillOutcome fill(const FillRequest &request) override;
    std::string describe() const override { return "mock:mlm"; }

  private:
    PhraseTable table_;
};

/// T-MLM mock keyed on source phrase -> target phrases. Scans the source
/// context left to right (longest key first at each position) and proposes
/// the target phrases of matching keys that do not already occur in the
/// unmasked part of the target.
class TableTmlm : public Provider {
  public:
    explicit TableTmlm(PhraseTable table);
    FillOutcome fill(const FillRequest &request) override;
    std::string describe() const override { return "mock:tmlm"; }

  private:
    PhraseTable table_;
    std::size_t max_key_len_ = 0;
};

// ------------------------------------------------------------------- cache --

/// Thread-safe response cache. Keys are the canonical serialized request
/// (kind, direction, payload); values are the serialized response payload.
class ResponseCache {
  public:
    std::optional<std::string> lookup(const std::string &key);
    void store(const std::string &key, std::string value);

    std::size_t hits() const;
    std::size_t misses() const;
    std::size_t hit_count(const std::string &key) const;
    std::size_t size() const;

  private:
    struct Entry {
        std::string value;
        std::size_t hit_count = 0;
    };
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Entry> entries_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

// ------------------------------------------------------------------ handle --

using namespace std::chrono_literals;

/// A role-tagged connection to a provider, with a response cache in front.
/// Copies share the provider and the cache.
class BackendHandle {
  public:
    BackendHandle(BackendKind kind, std::optional<Direction> direction, std::string endpoint,
                  std::shared_ptr<Provider> provider,
                  std::chrono::milliseconds timeout = 30000ms);

    BackendKind kind() const { return kind_; }
    std::optional<Direction> direction() const { return direction_; }
    const std::string &endpoint() const { return endpoint_; }
    std::chrono::milliseconds timeout() const { return timeout_; }

    /// One outcome per input, order preserved. Successful results are cached.
    std::vector<TranslateOutcome> translate(const std::vector<Tokens> &sentences) const;
    /// Candidates sorted by descending score, at most request.k of them.
    FillOutcome fill(const FillRequest &request) const;

    ResponseCache &cache() const { return *cache_; }
    static std::string translate_cache_key(BackendKind kind, Direction direction,
                                           const Tokens &tokens);

  private:
    BackendKind kind_;
    std::optional<Direction> direction_;
    std::string endpoint_;
    std::shared_ptr<Provider> provider_;
    std::chrono::milliseconds timeout_;
    std::shared_ptr<ResponseCache> cache_;
};

/// Opens a provider from an endpoint descriptor:
///   mock:identity                      identity translator
///   mock:dict:<table.tsv>              dictionary translator (token TAB translation)
///   mock:lossy:<table.tsv>:<a,b,...>   lossy translator with a drop list
///   mock:mlm:<table.tsv>               table M-MLM (phrase TAB alt TAB alt ...)
///   mock:tmlm:<table.tsv>              table T-MLM (src phrase TAB tgt phrase ...)
///   mock:empty                         fill provider that never proposes anything
///   tcp:<host>:<port>                  wire protocol over TCP
///   stdio:<shell command>              wire protocol over a child process's stdio
std::shared_ptr<Provider> open_provider(BackendKind kind, const std::string &endpoint,
                                        std::chrono::milliseconds timeout = 30000ms);
/// open_provider wrapped in a cached, role-tagged handle.
BackendHandle open_backend(BackendKind kind, std::optional<Direction> direction,
                           const std::string &endpoint,
                           std::chrono::milliseconds timeout = 30000ms);

DictionaryTranslator::Table read_dictionary_tsv(const std::string &path);
PhraseTable read_phrase_table_tsv(const std::string &path);

/// Convenience bundle for the four roles the generator needs.
struct Backends {
    BackendHandle fwd;
    BackendHandle bwd;
    BackendHandle mmlm;
    BackendHandle tmlm;
};

/// Single-sentence translate that throws BackendError on failure.
Tokens translate_one(const BackendHandle &handle, const Tokens &sentence);
/// Batch translate that throws BackendError on the first failure.
std::vector<Tokens> translate_all(const BackendHandle &handle, const std::vector<Tokens> &batch);

} // namespace drtt
