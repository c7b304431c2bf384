#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drtt/advgen.hpp"
#include "drtt/align.hpp"
#include "drtt/corpus.hpp"
#include "drtt/noise.hpp"

namespace drtt {

/// Raw key -> value settings from one source (file, environment or flags)
/// before validation. Values are JSON scalars, arrays of scalars, or strings
/// that still need coercion.
using ConfigValues = std::map<std::string, nlohmann::json>;

enum class ValueType { string, real, integer, boolean, real_list, string_list };

struct ConfigKey {
    std::string name;
    ValueType type;
    std::string help;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey> &config_schema();

/// Roles a backend endpoint can be configured for.
inline constexpr std::string_view kBackendRoles[] = {"fwd", "bwd", "mmlm", "tmlm", "victim"};

struct PipelineConfig {
    std::string src_lang = "en";
    std::string tgt_lang = "de";
    TokenizeMode tokenize = TokenizeMode::whitespace;
    std::string src; ///< input corpus, source side
    std::string tgt; ///< input corpus, target side
    std::string lexicon_fwd;
    std::string lexicon_rev;
    std::string embeddings;
    AlignConfig align;
    SymmetrizeHeuristic heuristic = SymmetrizeHeuristic::grow_diag_final_and;
    bool symmetrize = true;
    GenConfig gen;
    std::map<std::string, std::string> backends; ///< role -> endpoint, unset roles absent
    bool mock_backends = false;
    std::int64_t timeout_ms = 30000;
    std::vector<NoiseKind> noise_kinds{std::begin(kAllNoiseKinds), std::end(kAllNoiseKinds)};
    std::vector<double> noise_ratios{0.1, 0.2, 0.3};
    std::vector<double> gamma_grid{-10.0, -1.0, 0.0, 0.5, 1.0};
    std::size_t bootstrap_samples = 1000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out_dir = "out";

    /// Endpoint for `role`, falling back to a mock under mock_backends.
    /// Throws InputError naming the role when neither is available.
    std::string endpoint(std::string_view role) const;
};

struct PairDefaults {
    double beta;
    double gamma;
};

/// Thresholds used when the config leaves beta/gamma unset.
PairDefaults language_pair_defaults(std::string_view src_lang, std::string_view tgt_lang);

/// Parses the key = value format (see README). Throws InputError with the line number.
ConfigValues parse_config_text(std::string_view text);

/// Reads a config file, or the "config" object of a manifest.json.
ConfigValues load_config_file(const std::filesystem::path &path);

/// DRTT_BACKEND_<ROLE> variables as backend_<role> keys.
ConfigValues environment_overrides(const std::function<const char *(const char *)> &getenv_fn);

/// Merges file < environment < flags, rejects unknown keys and bad values,
/// and fills language-pair defaults.
PipelineConfig resolve_config(const ConfigValues &file, const ConfigValues &environment,
                              const ConfigValues &flags);

/// Canonical JSON with every key.
nlohmann::json config_to_json(const PipelineConfig &config);

/// FNV-1a 64 of the canonical JSON, excluding keys that cannot change
/// outputs (out_dir, workers). Hex string.
std::string config_hash(const PipelineConfig &config);

} // namespace drtt
